// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "perfvec/features.hpp"
#include "perfvec/trace.hpp"
#include "perfvec/uarch.hpp"

namespace perfvec::store {

// --- PVDS dataset ---------------------------------------------------------
//
// Layout (little-endian): "PVDS", version u32, n u64, F u32, K u32, C u32,
// K config ids (u32 length + bytes), workload count W u32, then W entries of
// (start offset u64, u32 length + workload id bytes), then the body: for each
// of the n instructions F f32 features followed by K f32 targets (0.1 ns).

inline constexpr std::uint32_t kDatasetVersion = 1;

struct Dataset {
  std::uint32_t F = static_cast<std::uint32_t>(features::kNumFeatures);
  std::uint32_t K = 0;
  std::uint32_t C = 31;
  std::vector<std::string> config_ids;
  std::vector<std::string> workload_ids;
  std::vector<std::uint64_t> offsets;  // W+1 entries; offsets[W] == n
  std::vector<float> features;         // n x F
  std::vector<float> targets;          // n x K

  std::size_t n() const { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t workloads() const { return workload_ids.size(); }
  std::size_t workload_of(std::size_t i) const;
  const float* feature_row(std::size_t i) const { return features.data() + i * F; }
  const float* target_row(std::size_t i) const { return targets.data() + i * K; }
  std::size_t config_index(const std::string& id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Every trace is simulated on every config; features are computed once per
// trace. `jobs` workers simulate (trace, config) pairs concurrently; the
// output does not depend on it.
Dataset build_dataset(const std::vector<trace::Trace>& traces,
                      const std::vector<uarch::UarchConfig>& configs,
                      std::uint32_t context = 31, unsigned jobs = 1);

// Same, with precomputed per-trace targets (cycles already converted).
Dataset assemble_dataset(const std::vector<std::string>& workload_ids,
                         const std::vector<features::FeatureMatrix>& feats,
                         const std::vector<std::string>& config_ids,
                         const std::vector<std::vector<std::vector<float>>>& targets,
                         std::uint32_t context);

// Target column for one (trace, config) pair in 0.1 ns units.
std::vector<float> latency_targets(const trace::Trace& trace, const uarch::UarchConfig& config);

void write_dataset(std::ostream& out, const Dataset& ds);
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

// Rows [pos-c, pos] of one trace's feature sequence (row-major, F columns)
// written to out as (c+1) x F doubles; rows before the trace start are zero.
void fill_window(const float* trace_rows, std::size_t F, std::size_t pos, std::size_t c,
                 double* out);

struct WindowBatch {
  std::size_t B = 0, T = 0, F = 0, K = 0;
  std::vector<double> x;  // B x T x F
  std::vector<double> t;  // B x K
};

// Windows of c+1 rows ending at each index; never crosses a workload start.
WindowBatch read_windows(const Dataset& ds, std::span<const std::size_t> indices, std::size_t c);

struct SplitSpec {
  double train = 0.90;
  double val = 0.05;
  double test = 0.05;
  std::uint64_t seed = 0;
  std::size_t block = 256;  // contiguous block length within a workload
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Blocks of consecutive instructions (never spanning a workload boundary)
// are shuffled with the seed; the first round(train*n) indices in shuffled
// block order go to train, the next round(val*n) to val, the rest to test.
Split split(const Dataset& ds, const SplitSpec& spec);
Split split(const std::vector<std::uint64_t>& offsets, const SplitSpec& spec);

// --- PVCK checkpoint ------------------------------------------------------
//
// "PVCK", version u32, then sections to end of file: name_len u16, name,
// rank u8, dims u64 x rank, payload. Payload is f64 little-endian, except for
// sections whose name ends in ".json": rank 1, dims[0] bytes of UTF-8 text.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> text;  // names ending in ".json"

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace perfvec::store
