// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "perfvec/rng.hpp"
#include "perfvec/simd.hpp"

namespace perfvec::simd {
namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (avx2_kernels() == nullptr) GTEST_SKIP() << "AVX2 not available";
  }
  const KernelTable& s = scalar_kernels();
  const KernelTable& v = *avx2_kernels();
};

TEST_F(SimdEquivalence, DotAndAxpy) {
  Rng rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u, 257u}) {
    auto a = random_vec(rng, n), b = random_vec(rng, n);
    EXPECT_NEAR(s.dot(a.data(), b.data(), n), v.dot(a.data(), b.data(), n), 1e-12 * (1.0 + n));
    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    s.axpy(0.37, a.data(), y1.data(), n);
    v.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14);
  }
}

TEST_F(SimdEquivalence, GemmVariants) {
  Rng rng(2);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 128, 32}, {17, 9, 30}, {64, 32, 33}, {5, 4, 0}};
  for (const auto& sh : shapes) {
    const std::size_t m = sh[0], n = sh[1], k = sh[2];
    // Leading dimensions padded by 3 to exercise strides.
    auto a = random_vec(rng, m * (k + 3) + k * (m + 3));
    auto bn = random_vec(rng, k * (n + 3) + n * (k + 3));
    auto c0 = random_vec(rng, m * (n + 3));
    struct Case {
      decltype(KernelTable::gemm_nn) fs, fv;
      std::size_t lda, ldb;
    };
    const Case cases[] = {{s.gemm_nn, v.gemm_nn, k + 3, n + 3},
                          {s.gemm_nt, v.gemm_nt, k + 3, k + 3},
                          {s.gemm_tn, v.gemm_tn, m + 3, n + 3}};
    for (const auto& cs : cases) {
      auto c1 = c0, c2 = c0;
      cs.fs(m, n, k, a.data(), cs.lda, bn.data(), cs.ldb, c1.data(), n + 3);
      cs.fv(m, n, k, a.data(), cs.lda, bn.data(), cs.ldb, c2.data(), n + 3);
      for (std::size_t i = 0; i < c1.size(); ++i) ASSERT_NEAR(c1[i], c2[i], 1e-12 * (1.0 + k));
    }
  }
}

TEST_F(SimdEquivalence, Activations) {
  Rng rng(3);
  for (std::size_t n : {1u, 4u, 5u, 63u, 1000u}) {
    auto x = random_vec(rng, n, 30.0);
    if (n > 3) {
      x[0] = 0.0;
      x[1] = 800.0;
      x[2] = -800.0;
    }
    std::vector<double> a(n), b(n);
    s.sigmoid(x.data(), a.data(), n);
    v.sigmoid(x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-15) << x[i];
    s.tanh(x.data(), a.data(), n);
    v.tanh(x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 2e-15) << x[i];
  }
}

TEST(SimdDispatch, SetIsaRoundTrip) {
  const Isa before = active_isa();
  set_isa(Isa::kScalar);
  EXPECT_EQ(active_isa(), Isa::kScalar);
  EXPECT_EQ(&kernels(), &scalar_kernels());
  if (avx2_available()) {
    set_isa(Isa::kAvx2);
    EXPECT_EQ(active_isa(), Isa::kAvx2);
  }
  set_isa(before);
}

TEST(SimdReference, DotMatchesNaiveLoop) {
  Rng rng(4);
  auto a = random_vec(rng, 32), b = random_vec(rng, 32);
  double ref = 0.0;
  for (int i = 0; i < 32; ++i) ref += a[i] * b[i];
  EXPECT_NEAR(scalar_kernels().dot(a.data(), b.data(), 32), ref, 1e-15);
}

}  // namespace
}  // namespace perfvec::simd
