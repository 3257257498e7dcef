// Built with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <vector>

#include "spectral_gain/kernels.hpp"

namespace spectral_gain::kernels {
namespace {

inline double horizontal_sum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// Four rows of C starting at row i.
void product_rows4(std::span<const ProductTerm> terms, std::size_t a_stride,
                   std::size_t i, double* c, std::size_t n, std::size_t ldc) {
  double* c0 = c + (i + 0) * ldc;
  double* c1 = c + (i + 1) * ldc;
  double* c2 = c + (i + 2) * ldc;
  double* c3 = c + (i + 3) * ldc;
  const std::size_t o0 = (i + 0) * a_stride;
  const std::size_t o1 = (i + 1) * a_stride;
  const std::size_t o2 = (i + 2) * a_stride;
  const std::size_t o3 = (i + 3) * a_stride;

  std::size_t j = 0;
  for (; j + 12 <= n; j += 12) {
    __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4),
            r02 = _mm256_loadu_pd(c0 + j + 8);
    __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4),
            r12 = _mm256_loadu_pd(c1 + j + 8);
    __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4),
            r22 = _mm256_loadu_pd(c2 + j + 8);
    __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4),
            r32 = _mm256_loadu_pd(c3 + j + 8);
    for (const ProductTerm& t : terms) {
      const __m256d b0 = _mm256_loadu_pd(t.b + j);
      const __m256d b1 = _mm256_loadu_pd(t.b + j + 4);
      const __m256d b2 = _mm256_loadu_pd(t.b + j + 8);
      __m256d a = _mm256_broadcast_sd(t.a + o0);
      r00 = _mm256_fmadd_pd(a, b0, r00);
      r01 = _mm256_fmadd_pd(a, b1, r01);
      r02 = _mm256_fmadd_pd(a, b2, r02);
      a = _mm256_broadcast_sd(t.a + o1);
      r10 = _mm256_fmadd_pd(a, b0, r10);
      r11 = _mm256_fmadd_pd(a, b1, r11);
      r12 = _mm256_fmadd_pd(a, b2, r12);
      a = _mm256_broadcast_sd(t.a + o2);
      r20 = _mm256_fmadd_pd(a, b0, r20);
      r21 = _mm256_fmadd_pd(a, b1, r21);
      r22 = _mm256_fmadd_pd(a, b2, r22);
      a = _mm256_broadcast_sd(t.a + o3);
      r30 = _mm256_fmadd_pd(a, b0, r30);
      r31 = _mm256_fmadd_pd(a, b1, r31);
      r32 = _mm256_fmadd_pd(a, b2, r32);
    }
    _mm256_storeu_pd(c0 + j, r00);
    _mm256_storeu_pd(c0 + j + 4, r01);
    _mm256_storeu_pd(c0 + j + 8, r02);
    _mm256_storeu_pd(c1 + j, r10);
    _mm256_storeu_pd(c1 + j + 4, r11);
    _mm256_storeu_pd(c1 + j + 8, r12);
    _mm256_storeu_pd(c2 + j, r20);
    _mm256_storeu_pd(c2 + j + 4, r21);
    _mm256_storeu_pd(c2 + j + 8, r22);
    _mm256_storeu_pd(c3 + j, r30);
    _mm256_storeu_pd(c3 + j + 4, r31);
    _mm256_storeu_pd(c3 + j + 8, r32);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d r0 = _mm256_loadu_pd(c0 + j), r1 = _mm256_loadu_pd(c1 + j),
            r2 = _mm256_loadu_pd(c2 + j), r3 = _mm256_loadu_pd(c3 + j);
    for (const ProductTerm& t : terms) {
      const __m256d b = _mm256_loadu_pd(t.b + j);
      r0 = _mm256_fmadd_pd(_mm256_broadcast_sd(t.a + o0), b, r0);
      r1 = _mm256_fmadd_pd(_mm256_broadcast_sd(t.a + o1), b, r1);
      r2 = _mm256_fmadd_pd(_mm256_broadcast_sd(t.a + o2), b, r2);
      r3 = _mm256_fmadd_pd(_mm256_broadcast_sd(t.a + o3), b, r3);
    }
    _mm256_storeu_pd(c0 + j, r0);
    _mm256_storeu_pd(c1 + j, r1);
    _mm256_storeu_pd(c2 + j, r2);
    _mm256_storeu_pd(c3 + j, r3);
  }
  for (; j < n; ++j) {
    double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
    for (const ProductTerm& t : terms) {
      const double b = t.b[j];
      s0 += t.a[o0] * b;
      s1 += t.a[o1] * b;
      s2 += t.a[o2] * b;
      s3 += t.a[o3] * b;
    }
    c0[j] = s0;
    c1[j] = s1;
    c2[j] = s2;
    c3[j] = s3;
  }
}

void product_row1(std::span<const ProductTerm> terms, std::size_t a_stride,
                  std::size_t i, double* c, std::size_t n, std::size_t ldc) {
  double* c0 = c + i * ldc;
  const std::size_t o0 = i * a_stride;
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d r0 = _mm256_loadu_pd(c0 + j), r1 = _mm256_loadu_pd(c0 + j + 4),
            r2 = _mm256_loadu_pd(c0 + j + 8), r3 = _mm256_loadu_pd(c0 + j + 12);
    for (const ProductTerm& t : terms) {
      const __m256d a = _mm256_broadcast_sd(t.a + o0);
      r0 = _mm256_fmadd_pd(a, _mm256_loadu_pd(t.b + j), r0);
      r1 = _mm256_fmadd_pd(a, _mm256_loadu_pd(t.b + j + 4), r1);
      r2 = _mm256_fmadd_pd(a, _mm256_loadu_pd(t.b + j + 8), r2);
      r3 = _mm256_fmadd_pd(a, _mm256_loadu_pd(t.b + j + 12), r3);
    }
    _mm256_storeu_pd(c0 + j, r0);
    _mm256_storeu_pd(c0 + j + 4, r1);
    _mm256_storeu_pd(c0 + j + 8, r2);
    _mm256_storeu_pd(c0 + j + 12, r3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d r0 = _mm256_loadu_pd(c0 + j);
    for (const ProductTerm& t : terms) {
      r0 = _mm256_fmadd_pd(_mm256_broadcast_sd(t.a + o0),
                           _mm256_loadu_pd(t.b + j), r0);
    }
    _mm256_storeu_pd(c0 + j, r0);
  }
  for (; j < n; ++j) {
    double s = c0[j];
    for (const ProductTerm& t : terms) s += t.a[o0] * t.b[j];
    c0[j] = s;
  }
}

void accumulate_products(std::span<const ProductTerm> terms,
                         std::size_t a_stride, double* c, std::size_t m,
                         std::size_t n, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) product_rows4(terms, a_stride, i, c, n, ldc);
  for (; i < m; ++i) product_row1(terms, a_stride, i, c, n, ldc);
}

// Adds term t's contribution to the R x Q accumulator tile at (i, j) over
// the first len4 elements. acc holds four partial sums per (i, j), row
// stride 4n.
template <int R, int Q>
void dot_tile(const DotTerm& t, std::size_t x_stride, std::size_t y_stride,
              std::size_t len4, std::size_t i, std::size_t j, double* acc,
              std::size_t n) {
  __m256d a[R][Q];
  for (int r = 0; r < R; ++r) {
    for (int q = 0; q < Q; ++q) a[r][q] = _mm256_loadu_pd(acc + 4 * ((i + r) * n + j + q));
  }
  const double* x[R];
  const double* y[Q];
  for (int r = 0; r < R; ++r) x[r] = t.x + (i + r) * x_stride;
  for (int q = 0; q < Q; ++q) y[q] = t.y + (j + q) * y_stride;
  for (std::size_t k = 0; k < len4; k += 4) {
    __m256d yv[Q];
    for (int q = 0; q < Q; ++q) yv[q] = _mm256_loadu_pd(y[q] + k);
    for (int r = 0; r < R; ++r) {
      const __m256d xv = _mm256_loadu_pd(x[r] + k);
      for (int q = 0; q < Q; ++q) a[r][q] = _mm256_fmadd_pd(xv, yv[q], a[r][q]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int q = 0; q < Q; ++q) _mm256_storeu_pd(acc + 4 * ((i + r) * n + j + q), a[r][q]);
  }
}

template <int R>
void dot_rows(const DotTerm& t, std::size_t x_stride, std::size_t y_stride,
              std::size_t len4, std::size_t i, double* acc, std::size_t n) {
  constexpr int Q = R == 4 ? 3 : 8;
  std::size_t j = 0;
  for (; j + Q <= n; j += Q) dot_tile<R, Q>(t, x_stride, y_stride, len4, i, j, acc, n);
  for (; j < n; ++j) dot_tile<R, 1>(t, x_stride, y_stride, len4, i, j, acc, n);
}

// Every term is folded into one register tile before moving on; suits
// large outputs with few terms.
template <int R, int Q>
void dot_block(std::span<const DotTerm> terms, std::size_t x_stride,
               std::size_t y_stride, std::size_t len, std::size_t i,
               std::size_t j, double* c, std::size_t ldc) {
  const std::size_t len4 = len - len % 4;
  __m256d a[R][Q];
  double tail[R][Q] = {};
  for (auto& row : a) {
    for (auto& v : row) v = _mm256_setzero_pd();
  }
  for (const DotTerm& t : terms) {
    const double* x[R];
    const double* y[Q];
    for (int r = 0; r < R; ++r) x[r] = t.x + (i + r) * x_stride;
    for (int q = 0; q < Q; ++q) y[q] = t.y + (j + q) * y_stride;
    for (std::size_t k = 0; k < len4; k += 4) {
      __m256d yv[Q];
      for (int q = 0; q < Q; ++q) yv[q] = _mm256_loadu_pd(y[q] + k);
      for (int r = 0; r < R; ++r) {
        const __m256d xv = _mm256_loadu_pd(x[r] + k);
        for (int q = 0; q < Q; ++q) a[r][q] = _mm256_fmadd_pd(xv, yv[q], a[r][q]);
      }
    }
    for (std::size_t k = len4; k < len; ++k) {
      for (int r = 0; r < R; ++r) {
        for (int q = 0; q < Q; ++q) tail[r][q] += x[r][k] * y[q][k];
      }
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int q = 0; q < Q; ++q) {
      c[(i + r) * ldc + j + q] += horizontal_sum(a[r][q]) + tail[r][q];
    }
  }
}

template <int R>
void dot_block_rows(std::span<const DotTerm> terms, std::size_t x_stride,
                    std::size_t y_stride, std::size_t len, std::size_t i, double* c,
                    std::size_t n, std::size_t ldc) {
  constexpr int Q = R == 4 ? 3 : 8;
  std::size_t j = 0;
  for (; j + Q <= n; j += Q) dot_block<R, Q>(terms, x_stride, y_stride, len, i, j, c, ldc);
  for (; j < n; ++j) dot_block<R, 1>(terms, x_stride, y_stride, len, i, j, c, ldc);
}

// Terms outer, so each term's rows stay cache-resident while every output
// is updated; partial sums live in a 4 m n buffer. Suits small outputs with
// many terms.
void dots_buffered(std::span<const DotTerm> terms, std::size_t x_stride,
                   std::size_t y_stride, std::size_t len, double* c, std::size_t m,
                   std::size_t n, std::size_t ldc) {
  const std::size_t len4 = len - len % 4;
  std::vector<double> acc(4 * m * n, 0.0);
  std::vector<double> tail(m * n, 0.0);
  for (const DotTerm& t : terms) {
    std::size_t i = 0;
    if (len4 > 0) {
      for (; i + 4 <= m; i += 4) dot_rows<4>(t, x_stride, y_stride, len4, i, acc.data(), n);
      for (; i < m; ++i) dot_rows<1>(t, x_stride, y_stride, len4, i, acc.data(), n);
    }
    if (len4 < len) {
      for (std::size_t r = 0; r < m; ++r) {
        const double* x = t.x + r * x_stride;
        for (std::size_t q = 0; q < n; ++q) {
          const double* y = t.y + q * y_stride;
          double s = 0.0;
          for (std::size_t k = len4; k < len; ++k) s += x[k] * y[k];
          tail[r * n + q] += s;
        }
      }
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t q = 0; q < n; ++q) {
      const __m256d v = _mm256_loadu_pd(acc.data() + 4 * (r * n + q));
      c[r * ldc + q] += horizontal_sum(v) + tail[r * n + q];
    }
  }
}

void accumulate_dots(std::span<const DotTerm> terms, std::size_t x_stride,
                     std::size_t y_stride, std::size_t len, double* c,
                     std::size_t m, std::size_t n, std::size_t ldc) {
  // 8192 outputs keep the buffer at 256 KiB.
  if (terms.size() > 1 && m * n <= 8192) {
    dots_buffered(terms, x_stride, y_stride, len, c, m, n, ldc);
    return;
  }
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) dot_block_rows<4>(terms, x_stride, y_stride, len, i, c, n, ldc);
  for (; i < m; ++i) dot_block_rows<1>(terms, x_stride, y_stride, len, i, c, n, ldc);
}

void sgd_update(std::span<double> weight, std::span<double> velocity,
                std::span<const double> grad, double lr, double momentum,
                double decay) {
  const std::size_t n = weight.size();
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmom = _mm256_set1_pd(momentum);
  const __m256d vdecay = _mm256_set1_pd(decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(weight.data() + i);
    const __m256d g = _mm256_loadu_pd(grad.data() + i);
    const __m256d step = _mm256_add_pd(g, _mm256_mul_pd(vdecay, w));
    const __m256d v = _mm256_sub_pd(
        _mm256_mul_pd(vmom, _mm256_loadu_pd(velocity.data() + i)),
        _mm256_mul_pd(vlr, step));
    _mm256_storeu_pd(velocity.data() + i, v);
    _mm256_storeu_pd(weight.data() + i, _mm256_add_pd(w, v));
  }
  for (; i < n; ++i) {
    const double step = grad[i] + decay * weight[i];
    velocity[i] = momentum * velocity[i] - lr * step;
    weight[i] += velocity[i];
  }
}

}  // namespace

namespace detail {
const KernelSet avx2_kernels{Isa::avx2, "avx2", &accumulate_products,
                             &accumulate_dots, &sgd_update};
}

}  // namespace spectral_gain::kernels
