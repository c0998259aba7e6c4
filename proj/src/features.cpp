// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace perfvec::features {

using trace::OpClass;

const std::array<std::string_view, kNumFeatures>& feature_names() {
  static const std::array<std::string_view, kNumFeatures> names = {
      "op_IALU",       "op_IMUL",        "op_IDIV",     "op_FADD",       "op_FMUL",
      "op_FDIV",       "op_LOAD",        "op_STORE",    "op_CBRANCH",    "op_JUMP",
      "op_NOP",        "dst_idx",        "dst_valid",   "src1_idx",      "src1_valid",
      "src2_idx",      "src2_valid",     "faulted",     "branch_taken",  "sd_fetch",
      "sd_fetch_cold", "sd_data",        "sd_data_cold", "sd_load",      "sd_load_cold",
      "sd_store",      "sd_store_cold",  "entropy_local", "entropy_global", "is_memory"};
  return names;
}

// --- stack distance -------------------------------------------------------

StackDistanceEngine::StackDistanceEngine(std::size_t capacity_hint) {
  const std::size_t cap = std::bit_ceil(std::max<std::size_t>(capacity_hint, 16));
  for (auto& ch : channels_) {
    ch.tree.assign(cap + 1, 0);
    ch.mark.assign(cap, 0);
  }
}

void StackDistanceEngine::Channel::grow() {
  const std::size_t cap = mark.size() * 2;
  mark.resize(cap, 0);
  tree.assign(cap + 1, 0);
  // Linear-time Fenwick build from the marks.
  for (std::size_t i = 1; i <= cap; ++i) {
    tree[i] += mark[i - 1];
    const std::size_t parent = i + (i & (~i + 1));
    if (parent <= cap) tree[parent] += tree[i];
  }
}

void StackDistanceEngine::Channel::add(std::uint64_t pos, std::int32_t delta) {
  mark[pos] = static_cast<std::uint8_t>(mark[pos] + delta);
  for (std::size_t i = pos + 1; i < tree.size(); i += i & (~i + 1)) tree[i] += delta;
}

std::int64_t StackDistanceEngine::Channel::prefix(std::uint64_t pos) const {
  std::int64_t s = 0;
  for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree[i];
  return s;
}

std::optional<std::uint64_t> StackDistanceEngine::observe(SdChannel channel, std::uint64_t line) {
  Channel& ch = channels_[static_cast<std::size_t>(channel)];
  if (ch.now == ch.mark.size()) ch.grow();
  const std::uint64_t pos = ch.now++;
  auto [it, inserted] = ch.last.try_emplace(line, pos);
  std::optional<std::uint64_t> dist;
  if (!inserted) {
    const std::uint64_t prev = it->second;
    dist = static_cast<std::uint64_t>(ch.prefix(pos) - ch.prefix(prev + 1));
    ch.add(prev, -1);
    it->second = pos;
  }
  ch.add(pos, +1);
  return dist;
}

// --- branch entropy -------------------------------------------------------

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

BranchEntropyEngine::BranchEntropyEngine(std::size_t window)
    : window_(std::clamp<std::size_t>(window, 1, 64)),
      mask_(window_ == 64 ? ~0ULL : ((1ULL << window_) - 1)) {}

double BranchEntropyEngine::entropy(const History& h) const {
  if (h.len == 0) return 0.0;
  const auto taken = std::popcount(h.bits & mask_);
  return binary_entropy(static_cast<double>(taken) / h.len);
}

void BranchEntropyEngine::push(History& h, bool taken) const {
  h.bits = ((h.bits << 1) | (taken ? 1ULL : 0ULL)) & mask_;
  if (h.len < window_) ++h.len;
}

std::pair<double, double> BranchEntropyEngine::observe(std::uint64_t pc, bool taken) {
  History& local = local_[pc];
  const std::pair<double, double> out{entropy(local), entropy(global_)};
  push(local, taken);
  push(global_, taken);
  return out;
}

// --- extraction -----------------------------------------------------------

namespace {

void put_distance(std::span<float> row, std::size_t column, std::optional<std::uint64_t> d) {
  if (!d) {
    row[column] = 1.0f;
    row[column + 1] = 1.0f;
    return;
  }
  const double v = std::log2(1.0 + static_cast<double>(*d)) / 32.0;
  row[column] = static_cast<float>(std::min(1.0, v));
  row[column + 1] = 0.0f;
}

void put_reg(std::span<float> row, std::size_t column, const trace::Reg& reg) {
  if (!reg) return;
  row[column] = static_cast<float>(*reg) / 32.0f;
  row[column + 1] = 1.0f;
}

}  // namespace

FeatureMatrix extract_features(const trace::Trace& trace) {
  FeatureMatrix m;
  m.rows = trace.size();
  m.data.assign(m.rows * kNumFeatures, 0.0f);
  StackDistanceEngine sd(trace.size() + 1);
  BranchEntropyEngine be;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& rec = trace.records[i];
    auto row = m.row(i);
    row[col::kOp + static_cast<std::size_t>(rec.op)] = 1.0f;
    put_reg(row, col::kDst, rec.dst);
    put_reg(row, col::kSrc1, rec.src1);
    put_reg(row, col::kSrc2, rec.src2);
    row[col::kFaulted] = rec.faulted ? 1.0f : 0.0f;
    row[col::kTaken] = rec.branch_taken.value_or(false) ? 1.0f : 0.0f;
    put_distance(row, col::kSdFetch, sd.observe_addr(SdChannel::kFetch, rec.pc));
    if (rec.mem_addr) {
      const std::uint64_t addr = *rec.mem_addr;
      put_distance(row, col::kSdData, sd.observe_addr(SdChannel::kData, addr));
      if (rec.op == OpClass::kLoad)
        put_distance(row, col::kSdLoad, sd.observe_addr(SdChannel::kLoad, addr));
      else
        put_distance(row, col::kSdStore, sd.observe_addr(SdChannel::kStore, addr));
      row[col::kIsMemory] = 1.0f;
    }
    if (rec.op == OpClass::kCbranch) {
      const auto [local, global] = be.observe(rec.pc, rec.branch_taken.value_or(false));
      row[col::kEntropyLocal] = static_cast<float>(local);
      row[col::kEntropyGlobal] = static_cast<float>(global);
    }
  }
  return m;
}

void apply_mask(std::span<float> row, const FeatureMask& mask) {
  if (!mask.stack_distance)
    std::fill(row.begin() + col::kSdFetch, row.begin() + col::kEntropyLocal, 0.0f);
  if (!mask.branch_entropy) {
    row[col::kEntropyLocal] = 0.0f;
    row[col::kEntropyGlobal] = 0.0f;
  }
}

void apply_mask(FeatureMatrix& m, const FeatureMask& mask) {
  if (mask.all()) return;
  for (std::size_t i = 0; i < m.rows; ++i) apply_mask(m.row(i), mask);
}

void write_features_csv(std::ostream& out, const FeatureMatrix& m) {
  const auto& names = feature_names();
  for (std::size_t c = 0; c < kNumFeatures; ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto row = m.row(i);
    for (std::size_t c = 0; c < kNumFeatures; ++c) {
      const int len = std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[c]));
      if (c) out << ',';
      out.write(buf, len);
    }
    out << '\n';
  }
}

}  // namespace perfvec::features
