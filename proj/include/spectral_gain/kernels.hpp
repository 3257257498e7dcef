#pragma once

// Inner loops shared by the layers and the optimizer. Each kernel has a
// portable scalar reference and, on x86-64, an AVX2+FMA variant; the variant
// is chosen once per process from CPUID and can be pinned with the
// SPECTRAL_GAIN_ISA environment variable ("scalar" or "avx2").
//
// Reduction order inside a variant is fixed, so results are reproducible
// run to run. Different variants agree to rounding, not bit for bit, except
// sgd_update which performs the same operations in the same order.

#include <cstddef>
#include <span>
#include <string_view>

namespace spectral_gain::kernels {

enum class Isa { scalar, avx2 };

struct ProductTerm {
  const double* a;  // column of A: element i lives at a[i * a_stride]
  const double* b;  // row of B: n contiguous values
};

// c[i*ldc + j] += sum_t terms[t].a[i*a_stride] * terms[t].b[j]
// for i < m, j < n. Terms are applied in order.
using AccumulateProductsFn = void (*)(std::span<const ProductTerm> terms,
                                      std::size_t a_stride, double* c,
                                      std::size_t m, std::size_t n,
                                      std::size_t ldc);

struct DotTerm {
  const double* x;  // row i starts at x + i*x_stride
  const double* y;  // row j starts at y + j*y_stride
};

// c[i*ldc + j] += sum_t sum_{k<len} x_t[i*x_stride + k] * y_t[j*y_stride + k]
using AccumulateDotsFn = void (*)(std::span<const DotTerm> terms,
                                  std::size_t x_stride, std::size_t y_stride,
                                  std::size_t len, double* c, std::size_t m,
                                  std::size_t n, std::size_t ldc);

// velocity = momentum*velocity - lr*(grad + decay*weight); weight += velocity
using SgdUpdateFn = void (*)(std::span<double> weight,
                             std::span<double> velocity,
                             std::span<const double> grad, double lr,
                             double momentum, double decay);

struct KernelSet {
  Isa isa;
  std::string_view name;
  AccumulateProductsFn accumulate_products;
  AccumulateDotsFn accumulate_dots;
  SgdUpdateFn sgd_update;
};

bool available(Isa isa);

// Throws std::invalid_argument when the ISA is not usable on this CPU.
const KernelSet& kernels_for(Isa isa);

// Process-wide selection; resolved on first call.
const KernelSet& active();

namespace detail {
extern const KernelSet scalar_kernels;
#if defined(SPECTRAL_GAIN_HAVE_AVX2)
extern const KernelSet avx2_kernels;
#endif
}  // namespace detail

}  // namespace spectral_gain::kernels
