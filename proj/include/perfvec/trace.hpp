// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perfvec::trace {

enum class OpClass : std::uint8_t {
  kIalu = 0,
  kImul,
  kIdiv,
  kFadd,
  kFmul,
  kFdiv,
  kLoad,
  kStore,
  kCbranch,
  kJump,
  kNop,
};

inline constexpr std::size_t kNumOpClasses = 11;
inline constexpr std::uint8_t kNumRegs = 32;

std::string_view op_name(OpClass op);
std::optional<OpClass> parse_op(std::string_view name);

inline bool is_memory(OpClass op) { return op == OpClass::kLoad || op == OpClass::kStore; }
inline bool is_branch(OpClass op) { return op == OpClass::kCbranch || op == OpClass::kJump; }

using Reg = std::optional<std::uint8_t>;

// One dynamic instruction of the toy ISA.
struct InstructionRecord {
  std::uint64_t pc = 0;
  OpClass op = OpClass::kNop;
  Reg dst;
  Reg src1;
  Reg src2;
  std::optional<std::uint64_t> mem_addr;       // iff LOAD/STORE
  std::optional<bool> branch_taken;            // iff CBRANCH/JUMP
  std::optional<std::uint64_t> branch_target;  // iff CBRANCH/JUMP
  bool faulted = false;

  friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

// Empty string when the record is well formed, otherwise the first violation.
std::string check_record(const InstructionRecord& r);

struct Trace {
  std::string workload_id;
  std::uint64_t seed = 0;
  std::vector<InstructionRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

enum class WorkloadKind {
  kStream,
  kPointerChase,
  kMatmulTiled,
  kBranchy,
  kMixed,
  kStrideScan,
  kReduce,
  kStencil,
};

inline constexpr std::array<WorkloadKind, 8> kAllWorkloads = {
    WorkloadKind::kStream,     WorkloadKind::kPointerChase, WorkloadKind::kMatmulTiled,
    WorkloadKind::kBranchy,    WorkloadKind::kMixed,        WorkloadKind::kStrideScan,
    WorkloadKind::kReduce,     WorkloadKind::kStencil};

// Default seen/unseen program split.
inline constexpr std::array<WorkloadKind, 6> kTrainingWorkloads = {
    WorkloadKind::kStream,  WorkloadKind::kPointerChase, WorkloadKind::kMatmulTiled,
    WorkloadKind::kBranchy, WorkloadKind::kMixed,        WorkloadKind::kStrideScan};
inline constexpr std::array<WorkloadKind, 2> kHeldOutWorkloads = {WorkloadKind::kReduce,
                                                                  WorkloadKind::kStencil};

std::string_view workload_name(WorkloadKind kind);
WorkloadKind parse_workload(std::string_view name);  // throws kInvalidArgument

using WorkloadParams = std::map<std::string, double>;

// Desk-scale defaults (roughly 2e5 dynamic instructions each).
WorkloadParams default_params(WorkloadKind kind);

// Deterministic synthetic workload. Unspecified parameters take the values in
// default_params(). Every generator emits the same 4-instruction prologue
// (IALU r28, IALU r29, IALU r30, NOP) and 2-instruction epilogue (NOP, JUMP).
// Counted loops close with `IALU rc <- rc+1; CBRANCH rc` taken back to the
// head on every iteration except the last. Elements are 8 bytes; arrays live
// in disjoint 256 MiB regions.
//
//   stream {len, passes}: triad c[i] = a[i] + s*b[i]; per element
//     LOAD a, LOAD b, FMUL, FADD, STORE c, latch (7 instructions); each pass
//     ends with one IALU that resets the index. len=0 emits no passes.
//   pointer_chase {nodes, steps}: 64-byte nodes linked in a seeded random
//     cyclic order. Build phase per node: STORE next, latch (3). Chase phase
//     per step: LOAD p <- [p], IALU, latch (4).
//   matmul_tiled {n, tile}: C += A*B with all three loops blocked by tile.
//     Per (i, j, k-tile): LOAD C[i][j], then per k: LOAD A[i][k],
//     LOAD B[k][j], FMUL, FADD, latch (6); STORE C[i][j]; j latch (2). Each
//     loop (tile or point) ends in its own latch; a loop with trip count 1
//     emits no latch, so tile == n yields exactly the untiled nest and
//     LOAD count = 2n^3 + n^2 * (n / tile).
//   branchy {len, p_taken, p_taken2, phase_len}: per iteration LOAD x[i],
//     IALU, CBRANCH (taken with probability p_taken, switching to p_taken2
//     for alternating blocks of phase_len iterations); taken path IMUL, IALU;
//     fall-through IALU, IALU, JUMP; then IALU and a JUMP latch. This is the
//     only generator whose sole CBRANCH is data dependent.
//   mixed {len, phase_len, fault_rate}: cycles compute (FDIV, FMUL, IDIV),
//     random-memory and random-branch phases of phase_len iterations. IDIV
//     faults (divide by zero) with probability fault_rate.
//   stride_scan {len, stride}: LOAD a[i*stride], IALU accumulate, latch (4).
//   reduce {len, passes}: LOAD a[i], FADD chain, latch (4).
//   stencil {n, sweeps}: 5-point Jacobi sweep over the (n-2)^2 interior:
//     5 LOAD, 4 FADD, FMUL, STORE, latch (13) per point, row latch (2).
Trace gen_workload(WorkloadKind kind, const WorkloadParams& params, std::uint64_t seed);

// Untiled matrix multiply reference nest (the tile == n specialization).
Trace gen_matmul_naive(std::size_t n, std::uint64_t seed);

struct TraceStats {
  std::array<std::uint64_t, kNumOpClasses> op_counts{};
  std::uint64_t total = 0;
  std::uint64_t unique_data_addresses = 0;  // byte addresses
  std::uint64_t branch_count = 0;           // CBRANCH + JUMP
  std::uint64_t cbranch_count = 0;
  std::uint64_t taken_branches = 0;         // taken CBRANCH
  std::uint64_t faulted = 0;
};

TraceStats trace_stats(const Trace& trace);

// PVTR binary format: 16-byte header (magic "PVTR", version u32 LE, record
// count u64 LE) followed by fixed 40-byte records.
inline constexpr std::uint32_t kTraceFormatVersion = 1;
inline constexpr std::size_t kTraceRecordBytes = 40;

void write_trace(std::ostream& out, const Trace& trace);
void write_trace(const std::filesystem::path& path, const Trace& trace);
Trace read_trace(std::istream& in, std::string workload_id = {});
// workload_id defaults to the file stem.
Trace read_trace(const std::filesystem::path& path);

}  // namespace perfvec::trace
