// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>

#include "perfvec/error.hpp"
#include "perfvec/simd.hpp"

namespace perfvec::simd {

#if defined(PERFVEC_HAVE_AVX2)
const KernelTable* avx2_kernel_table();
#endif

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("PERFVEC_KERNELS");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable*& active() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool avx2_available() {
#if defined(PERFVEC_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

const KernelTable* avx2_kernels() {
#if defined(PERFVEC_HAVE_AVX2)
  if (avx2_available()) return avx2_kernel_table();
#endif
  return nullptr;
}

const KernelTable& kernels() { return *active(); }

void set_isa(Isa isa) {
  if (isa == Isa::kScalar) {
    active() = &scalar_kernels();
    return;
  }
  const KernelTable* t = avx2_kernels();
  require(t != nullptr, ErrorKind::kInvalidArgument, "AVX2 kernels unavailable on this CPU");
  active() = t;
}

Isa active_isa() { return kernels().isa; }

}  // namespace perfvec::simd
