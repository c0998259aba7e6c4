// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense f64 kernels behind every model hot loop. Each kernel has a scalar
// reference and an AVX2+FMA variant; the variant is picked once at startup
// from CPUID and can be forced with PERFVEC_KERNELS=scalar|avx2 or set_isa().
//
// All matrices are row-major with explicit leading dimensions. The gemm
// kernels accumulate into C.
namespace perfvec::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc);
  void (*sigmoid)(const double* x, double* y, std::size_t n);
  void (*tanh)(const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

bool avx2_available();

// Active table. Switching is not thread-safe; do it before spawning workers.
const KernelTable& kernels();
void set_isa(Isa isa);
Isa active_isa();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x,
                 std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace perfvec::simd
