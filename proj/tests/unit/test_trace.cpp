// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "perfvec/error.hpp"
#include "perfvec/trace.hpp"

namespace perfvec::trace {
namespace {

std::string serialize(const Trace& t) {
  std::ostringstream out;
  write_trace(out, t);
  return out.str();
}

WorkloadParams small_params(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::kStream: return {{"len", 300}, {"passes", 2}};
    case WorkloadKind::kPointerChase: return {{"nodes", 200}, {"steps", 500}};
    case WorkloadKind::kMatmulTiled: return {{"n", 8}, {"tile", 4}};
    case WorkloadKind::kBranchy: return {{"len", 500}, {"phase_len", 100}};
    case WorkloadKind::kMixed: return {{"len", 800}, {"phase_len", 50}, {"fault_rate", 0.05}};
    case WorkloadKind::kStrideScan: return {{"len", 400}, {"stride", 3}};
    case WorkloadKind::kReduce: return {{"len", 300}, {"passes", 2}};
    case WorkloadKind::kStencil: return {{"n", 10}, {"sweeps", 2}};
  }
  return {};
}

TEST(Trace, MatmulLoadCountByHand) {
  // Per (i, j): one accumulator load per k-tile, two source loads per k.
  // n=4, tile=4 => 16 * (1 + 2*4) = 2*4^3 + 4^2.
  const auto t = gen_workload(WorkloadKind::kMatmulTiled, {{"n", 4}, {"tile", 4}}, 1);
  const auto st = trace_stats(t);
  EXPECT_EQ(st.op_counts[static_cast<int>(OpClass::kLoad)], 2u * 64 + 16);
}

TEST(Trace, MatmulLoadCountTiled) {
  for (int tile : {1, 2, 4, 8}) {
    const auto t = gen_workload(WorkloadKind::kMatmulTiled, {{"n", 8}, {"tile", tile}}, 1);
    EXPECT_EQ(trace_stats(t).op_counts[static_cast<int>(OpClass::kLoad)],
              static_cast<std::uint64_t>(2 * 512 + 64 * (8 / tile)));
  }
}

TEST(Trace, StreamZeroLengthIsPrologueEpilogueOnly) {
  for (std::uint64_t seed : {0ull, 5ull, 99ull}) {
    const auto t = gen_workload(WorkloadKind::kStream, {{"len", 0}}, seed);
    ASSERT_EQ(t.size(), 6u);
    EXPECT_EQ(t.records[0].op, OpClass::kIalu);
    EXPECT_EQ(t.records[3].op, OpClass::kNop);
    EXPECT_EQ(t.records[4].op, OpClass::kNop);
    EXPECT_EQ(t.records[5].op, OpClass::kJump);
    EXPECT_EQ(trace_stats(t).op_counts[static_cast<int>(OpClass::kLoad)], 0u);
  }
}

TEST(Trace, BranchyAlwaysTaken) {
  const auto t = gen_workload(WorkloadKind::kBranchy, {{"len", 1000}, {"p_taken", 1.0}}, 7);
  std::size_t cb = 0;
  for (const auto& r : t.records)
    if (r.op == OpClass::kCbranch) {
      ++cb;
      EXPECT_TRUE(*r.branch_taken);
    }
  EXPECT_GT(cb, 0u);
  const auto st = trace_stats(t);
  EXPECT_EQ(st.taken_branches, st.cbranch_count);
}

TEST(Trace, StreamUniqueAddresses) {
  // Three arrays (a, b, c) of 256 eight-byte elements in disjoint regions.
  const auto t = gen_workload(WorkloadKind::kStream, {{"len", 256}, {"passes", 2}}, 3);
  std::set<std::uint64_t> oracle;
  for (const auto& r : t.records)
    if (r.mem_addr) oracle.insert(*r.mem_addr);
  EXPECT_EQ(oracle.size(), 3u * 256);
  EXPECT_EQ(trace_stats(t).unique_data_addresses, 3u * 256);
}

TEST(Trace, EmptyStats) {
  const auto st = trace_stats(Trace{});
  EXPECT_EQ(st.total, 0u);
  EXPECT_EQ(st.unique_data_addresses, 0u);
  EXPECT_EQ(st.branch_count, 0u);
  for (auto c : st.op_counts) EXPECT_EQ(c, 0u);
}

TEST(Trace, CountsSumToLength) {
  for (auto kind : kAllWorkloads) {
    const auto t = gen_workload(kind, small_params(kind), 11);
    const auto st = trace_stats(t);
    std::uint64_t sum = 0;
    for (auto c : st.op_counts) sum += c;
    EXPECT_EQ(sum, t.size()) << workload_name(kind);
    EXPECT_EQ(st.total, t.size());
  }
}

TEST(Trace, DeterministicAndWellFormed) {
  for (auto kind : kAllWorkloads) {
    for (std::uint64_t seed : {1ull, 2ull, 12345ull}) {
      const auto a = gen_workload(kind, small_params(kind), seed);
      const auto b = gen_workload(kind, small_params(kind), seed);
      EXPECT_EQ(serialize(a), serialize(b)) << workload_name(kind);
      for (const auto& r : a.records) ASSERT_EQ(check_record(r), "") << workload_name(kind);
    }
  }
}

TEST(Trace, MatmulTileEqualsNIsUntiled) {
  for (std::size_t n : {2u, 4u, 8u}) {
    const auto tiled = gen_workload(WorkloadKind::kMatmulTiled,
                                    {{"n", double(n)}, {"tile", double(n)}}, 5);
    const auto naive = gen_matmul_naive(n, 5);
    ASSERT_EQ(tiled.size(), naive.size());
    EXPECT_TRUE(tiled.records == naive.records);
  }
}

TEST(Trace, MixedFaultsOnlyOnIdiv) {
  const auto t = gen_workload(WorkloadKind::kMixed, small_params(WorkloadKind::kMixed), 3);
  std::size_t faults = 0;
  for (const auto& r : t.records)
    if (r.faulted) {
      ++faults;
      EXPECT_EQ(r.op, OpClass::kIdiv);
    }
  EXPECT_GT(faults, 0u);
}

TEST(Trace, InvalidParameters) {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kInvalidArgument;  // sentinel: no throw
  };
  EXPECT_EQ(kind_of([] { gen_workload(WorkloadKind::kMatmulTiled, {{"n", 4}, {"tile", 8}}, 1); }),
            ErrorKind::kParameter);
  EXPECT_EQ(kind_of([] { gen_workload(WorkloadKind::kMatmulTiled, {{"n", 6}, {"tile", 4}}, 1); }),
            ErrorKind::kParameter);
  EXPECT_EQ(kind_of([] { gen_workload(WorkloadKind::kStream, {{"bogus", 1}}, 1); }),
            ErrorKind::kParameter);
  EXPECT_THROW(parse_workload("nope"), Error);
}

TEST(TraceIo, RoundTripAndLayout) {
  const auto t = gen_workload(WorkloadKind::kMixed, small_params(WorkloadKind::kMixed), 9);
  const std::string bytes = serialize(t);
  ASSERT_EQ(bytes.size(), 16 + 40 * t.size());
  EXPECT_EQ(bytes.substr(0, 4), "PVTR");
  std::istringstream in(bytes);
  const auto back = read_trace(in, t.workload_id);
  EXPECT_TRUE(back.records == t.records);
}

TEST(TraceIo, RejectsBadMagicAndTruncation) {
  const auto t = gen_workload(WorkloadKind::kStream, {{"len", 4}}, 1);
  std::string bytes = serialize(t);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream in1(bad);
  try {
    read_trace(in1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
  std::istringstream in2(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(read_trace(in2), Error);
  std::string ver = bytes;
  ver[4] = 9;
  std::istringstream in3(ver);
  EXPECT_THROW(read_trace(in3), Error);
}

}  // namespace
}  // namespace perfvec::trace
