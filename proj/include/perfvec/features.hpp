// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "perfvec/trace.hpp"

// Microarchitecture-independent per-instruction features. Nothing in this
// module takes a uarch::UarchConfig.
namespace perfvec::features {

inline constexpr std::size_t kNumFeatures = 30;
inline constexpr std::uint64_t kLineBytes = 64;
inline constexpr std::size_t kEntropyWindow = 64;

// Column layout.
namespace col {
inline constexpr std::size_t kOp = 0;  // 11 one-hot columns
inline constexpr std::size_t kDst = 11, kDstValid = 12;
inline constexpr std::size_t kSrc1 = 13, kSrc1Valid = 14;
inline constexpr std::size_t kSrc2 = 15, kSrc2Valid = 16;
inline constexpr std::size_t kFaulted = 17, kTaken = 18;
inline constexpr std::size_t kSdFetch = 19;  // (distance, cold) pairs: fetch, data, load, store
inline constexpr std::size_t kSdData = 21, kSdLoad = 23, kSdStore = 25;
inline constexpr std::size_t kEntropyLocal = 27, kEntropyGlobal = 28;
inline constexpr std::size_t kIsMemory = 29;
}  // namespace col

const std::array<std::string_view, kNumFeatures>& feature_names();

enum class SdChannel : std::uint8_t { kFetch = 0, kData, kLoad, kStore };

// Exact LRU stack distance per channel: the number of distinct lines touched
// on that channel since the previous access to the same line. A Fenwick tree
// over access positions marks the latest position of every line, so a query
// is a range count in O(log n).
class StackDistanceEngine {
 public:
  explicit StackDistanceEngine(std::size_t capacity_hint = 1024);

  // `line` is an already line-aligned address (any granularity). nullopt
  // means cold (first access).
  std::optional<std::uint64_t> observe(SdChannel channel, std::uint64_t line);

  std::optional<std::uint64_t> observe_addr(SdChannel channel, std::uint64_t addr) {
    return observe(channel, addr / kLineBytes);
  }

 private:
  struct Channel {
    std::unordered_map<std::uint64_t, std::uint64_t> last;  // line -> position
    std::vector<std::int32_t> tree;                          // 1-based Fenwick
    std::vector<std::uint8_t> mark;
    std::uint64_t now = 0;

    void grow();
    void add(std::uint64_t pos, std::int32_t delta);
    std::int64_t prefix(std::uint64_t pos) const;  // marks in [0, pos)
  };
  std::array<Channel, 4> channels_;
};

double binary_entropy(double p);

// Windowed binary Shannon entropy of branch outcomes, returned for the
// history BEFORE the current outcome is appended. Empty history gives 0.
class BranchEntropyEngine {
 public:
  explicit BranchEntropyEngine(std::size_t window = kEntropyWindow);

  // Returns (local, global).
  std::pair<double, double> observe(std::uint64_t pc, bool taken);

 private:
  struct History {
    std::uint64_t bits = 0;
    std::uint32_t len = 0;
  };
  double entropy(const History& h) const;
  void push(History& h, bool taken) const;

  std::size_t window_;
  std::uint64_t mask_;
  History global_;
  std::unordered_map<std::uint64_t, History> local_;
};

// n x 30 row-major f32 matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * kNumFeatures, kNumFeatures};
  }
  std::span<float> row(std::size_t i) { return {data.data() + i * kNumFeatures, kNumFeatures}; }
};

// Single pass over the trace. Stack distances use 64-byte lines on all four
// channels, encoded as (min(1, log2(1+d)/32), 0) or (1, 1) when cold; data
// accesses feed the data channel plus the load or store channel. Branch
// entropy engines see CBRANCH outcomes only.
FeatureMatrix extract_features(const trace::Trace& trace);

// Feature groups that can be zeroed for ablation studies.
struct FeatureMask {
  bool stack_distance = true;
  bool branch_entropy = true;

  bool all() const { return stack_distance && branch_entropy; }
};

void apply_mask(FeatureMatrix& m, const FeatureMask& mask);
void apply_mask(std::span<float> row, const FeatureMask& mask);

void write_features_csv(std::ostream& out, const FeatureMatrix& m);

}  // namespace perfvec::features
