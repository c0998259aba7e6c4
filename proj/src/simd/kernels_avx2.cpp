// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.

#include <immintrin.h>

// Eigen templates instantiated here carry AVX2 code. Renaming the namespace
// keeps them from being merged with the baseline instantiations elsewhere.
#define Eigen perfvec_eigen_avx2
#include <Eigen/Core>

#include "perfvec/simd.hpp"

namespace perfvec::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// GEMMs go through Eigen's blocked kernels, which this TU builds with AVX2/FMA.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using Con = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

inline Con view(const double* p, std::size_t rows, std::size_t cols, std::size_t ld) {
  return Con(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
             Eigen::OuterStride<>(static_cast<Eigen::Index>(ld)));
}

inline Mut view(double* p, std::size_t rows, std::size_t cols, std::size_t ld) {
  return Mut(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
             Eigen::OuterStride<>(static_cast<Eigen::Index>(ld)));
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  view(c, m, n, ldc).noalias() += view(a, m, k, lda) * view(b, k, n, ldb);
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  view(c, m, n, ldc).noalias() += view(a, k, m, lda).transpose() * view(b, k, n, ldb);
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  view(c, m, n, ldc).noalias() += view(a, m, k, lda) * view(b, n, k, ldb).transpose();
}

// exp(x) for x in [-708, 708]: Cody-Waite reduction by ln2, degree-13 Taylor
// on |r| <= ln2/2 (truncation < 1e-17 relative), exponent rebuilt by bit
// arithmetic.
inline __m256d exp_pd(__m256d x) {
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-708.0)), _mm256_set1_pd(708.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int i = 1; i < 14; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[i]));
  __m256i e = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(e));
}

void sigmoid_avx2(const double* x, double* y, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d neg = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_pd(_mm256_xor_pd(_mm256_loadu_pd(x + i), neg));
    _mm256_storeu_pd(y + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
  }
  if (i < n) {
    double tmp[4] = {0, 0, 0, 0};
    for (std::size_t t = i; t < n; ++t) tmp[t - i] = x[t];
    const __m256d e = exp_pd(_mm256_xor_pd(_mm256_loadu_pd(tmp), neg));
    _mm256_storeu_pd(tmp, _mm256_div_pd(one, _mm256_add_pd(one, e)));
    for (std::size_t t = i; t < n; ++t) y[t] = tmp[t - i];
  }
}

// tanh(x) = sign(x) * (1 - e) / (1 + e), e = exp(-2|x|)
inline __m256d tanh_pd(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d ax = _mm256_andnot_pd(sign, x);
  const __m256d e = exp_pd(_mm256_mul_pd(ax, _mm256_set1_pd(-2.0)));
  const __m256d t = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
  return _mm256_or_pd(t, _mm256_and_pd(x, sign));
}

void tanh_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, tanh_pd(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double tmp[4] = {0, 0, 0, 0};
    for (std::size_t t = i; t < n; ++t) tmp[t - i] = x[t];
    _mm256_storeu_pd(tmp, tanh_pd(_mm256_loadu_pd(tmp)));
    for (std::size_t t = i; t < n; ++t) y[t] = tmp[t - i];
  }
}

}  // namespace

const KernelTable* avx2_kernel_table() {
  static const KernelTable table{Isa::kAvx2,  dot_avx2,     axpy_avx2,
                                 gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2,
                                 sigmoid_avx2, tanh_avx2};
  return &table;
}

}  // namespace perfvec::simd
