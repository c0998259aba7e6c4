// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "perfvec/trace.hpp"

namespace perfvec::uarch {

struct CacheConfig {
  std::uint32_t sets = 64;
  std::uint32_t ways = 4;
  std::uint32_t line_bytes = 64;
  std::uint32_t hit_cycles = 1;
  bool present = true;

  std::uint64_t capacity_bytes() const {
    return present ? std::uint64_t{sets} * ways * line_bytes : 0;
  }

  friend bool operator==(const CacheConfig&, const CacheConfig&) = default;
};

enum class CoreKind { kInOrder, kWindow };

using OpLatencies = std::array<std::uint32_t, trace::kNumOpClasses>;

struct UarchConfig {
  std::string config_id;
  CoreKind core_kind = CoreKind::kWindow;
  std::uint32_t clock_ps = 500;
  std::uint32_t fetch_width = 2;
  std::uint32_t window_size = 32;  // 1 for InOrder
  OpLatencies op_latency{};
  CacheConfig l1i;
  CacheConfig l1d;
  CacheConfig l2;
  std::uint32_t mem_cycles = 100;  // L2 miss, or L1 miss without an L2
  std::uint32_t bp_index_bits = 10;
  std::uint32_t bp_penalty_cycles = 8;

  std::uint32_t latency(trace::OpClass op) const {
    return op_latency[static_cast<std::size_t>(op)];
  }

  friend bool operator==(const UarchConfig&, const UarchConfig&) = default;
};

// Empty string when every invariant holds, otherwise the first violation.
std::string check_config(const UarchConfig& c);

// Random valid configuration. The core is InOrder with probability
// kind_bias. Sampling ranges:
//   clock_ps 250..1000 (step 50); fetch_width 1..8 (InOrder 1..2);
//   window_size {8,16,32,64,96,128,192,256}; one line size {32,64,128} for
//   every cache; L1I 8..64 KiB, L1D 4..128 KiB (2/4/8 ways, 1..3 / 1..4
//   cycles); L2 present with p=0.85, 128 KiB..8 MiB (4/8/16 ways, 6..20
//   cycles); mem_cycles 60..300; bp_index_bits 4..16; bp_penalty 3..20;
//   op latencies IALU 1..2, IMUL 2..5, IDIV 8..30, FADD 2..6, FMUL 3..7,
//   FDIV 8..30, LOAD/STORE 1..2, CBRANCH/JUMP 1, NOP 0..1.
UarchConfig sample_config(std::uint64_t seed, double kind_bias);
UarchConfig sample_config_of_kind(std::uint64_t seed, CoreKind kind);

// Hand-written presets: "inorder_little" (2-issue blocking in-order core)
// and "ooo_big" (4-wide, 192-entry window).
UarchConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Same core as `base` with the L1D and L2 capacities replaced (ways and line
// size kept). Used for cache-size exploration grids.
UarchConfig with_cache_sizes(const UarchConfig& base, std::uint32_t l1d_kb, std::uint32_t l2_kb);

struct ConfigSuite {
  std::vector<UarchConfig> configs;
  std::vector<std::string> train_ids;
  std::vector<std::string> heldout_ids;

  const UarchConfig& get(const std::string& id) const;
  std::vector<UarchConfig> select(const std::vector<std::string>& ids) const;
};

// n_random sampled configs plus both presets. The last n_heldout random
// configs are held out; the InOrder count is round(kind_bias * total).
ConfigSuite default_suite(std::uint64_t seed, std::size_t n_random = 12,
                          std::size_t n_heldout = 2, double kind_bias = 0.13);

// Line-oriented `key = value` text, '#' comments.
void write_config(std::ostream& out, const UarchConfig& c);
UarchConfig read_config(std::istream& in);
void write_config(const std::filesystem::path& path, const UarchConfig& c);
UarchConfig read_config(const std::filesystem::path& path);

// A suite directory holds <config_id>.cfg files and suite.manifest with one
// `train <id>` or `heldout <id>` line per config.
void write_suite(const std::filesystem::path& dir, const ConfigSuite& suite);
ConfigSuite read_suite(const std::filesystem::path& dir);

// --- simulation -----------------------------------------------------------

struct RetireTimes {
  std::vector<std::uint64_t> retire_cycle;  // program order, non-decreasing

  std::size_t size() const { return retire_cycle.size(); }
  bool empty() const { return retire_cycle.empty(); }
  std::uint64_t last() const { return retire_cycle.empty() ? 0 : retire_cycle.back(); }
};

struct SimOptions {
  bool ideal_icache = false;  // every fetch hits L1I
};

struct SimStats {
  std::uint64_t l1i_accesses = 0, l1i_misses = 0;
  std::uint64_t l1d_accesses = 0, l1d_misses = 0;
  std::uint64_t l2_accesses = 0, l2_misses = 0;
  std::uint64_t cbranches = 0, mispredicts = 0;
};

struct SimResult {
  RetireTimes retire;
  SimStats stats;
};

// Two-phase timing model.
//   fetch:   start_i = max(start_{i-1}, start_{i-W} + 1, redirect_i)
//            fc_i    = max(fc_{i-1}, start_i + L1I latency)
//   execute: begin_i = max(fc_i, ready(src1), ready(src2), retire_{i-window})
//            done_i  = begin_i + op_latency (+ L1D latency for LOAD/STORE)
//   retire:  retire_i = max(retire_{i-1}, done_i)
// W is fetch_width; window is 1 for InOrder. A mispredicted CBRANCH (or a
// faulted instruction) sets redirect_{i+1} = done_i + bp_penalty_cycles.
// Caches: set-associative, true LRU, write-allocate, inclusive L2 with
// back-invalidation, no writeback cost. Miss latency adds the next level's
// hit time, and mem_cycles on a last-level miss. Branch predictor: 2-bit
// counters (initialised weakly taken) indexed by pc bits [2, 2+bits); JUMPs
// never mispredict.
SimResult simulate_detailed(const trace::Trace& trace, const UarchConfig& config,
                            const SimOptions& options = {});
RetireTimes simulate(const trace::Trace& trace, const UarchConfig& config,
                     const SimOptions& options = {});

// t_1 = retire_1, t_i = retire_i - retire_{i-1}. Throws kPrecondition on a
// decreasing sequence.
std::vector<std::uint64_t> incremental_latencies(const RetireTimes& rt);

std::uint64_t total_time_ps(const RetireTimes& rt, const UarchConfig& config);

// Training target unit: 0.1 ns.
inline double cycles_to_target(std::uint64_t cycles, std::uint32_t clock_ps) {
  return static_cast<double>(cycles) * clock_ps / 100.0;
}

}  // namespace perfvec::uarch
