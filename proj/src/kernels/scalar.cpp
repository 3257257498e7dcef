#include "spectral_gain/kernels.hpp"

namespace spectral_gain::kernels {
namespace {

void accumulate_products(std::span<const ProductTerm> terms,
                         std::size_t a_stride, double* c, std::size_t m,
                         std::size_t n, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * ldc;
    for (const ProductTerm& term : terms) {
      const double a = term.a[i * a_stride];
      const double* b = term.b;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b[j];
    }
  }
}

void accumulate_dots(std::span<const DotTerm> terms, std::size_t x_stride,
                     std::size_t y_stride, std::size_t len, double* c,
                     std::size_t m, std::size_t n, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (const DotTerm& term : terms) {
        const double* x = term.x + i * x_stride;
        const double* y = term.y + j * y_stride;
        for (std::size_t k = 0; k < len; ++k) sum += x[k] * y[k];
      }
      c[i * ldc + j] += sum;
    }
  }
}

void sgd_update(std::span<double> weight, std::span<double> velocity,
                std::span<const double> grad, double lr, double momentum,
                double decay) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    const double step = grad[i] + decay * weight[i];
    velocity[i] = momentum * velocity[i] - lr * step;
    weight[i] += velocity[i];
  }
}

}  // namespace

namespace detail {
const KernelSet scalar_kernels{Isa::scalar, "scalar", &accumulate_products,
                               &accumulate_dots, &sgd_update};
}

}  // namespace spectral_gain::kernels
