// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>
#include <sstream>

#include "perfvec/error.hpp"
#include "perfvec/store.hpp"
#include "test_util.hpp"

namespace perfvec::store {
namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind{0};
}

class SmallDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Rng rng(21);
    traces_ = {testing::random_trace(rng, 400), testing::random_trace(rng, 17),
               testing::random_trace(rng, 1000)};
    for (std::size_t w = 0; w < traces_.size(); ++w) traces_[w].workload_id = "w" + std::to_string(w);
    configs_ = {uarch::preset(uarch::preset_names().front()), uarch::sample_config(5, 0.5)};
    ds_ = build_dataset(traces_, configs_, 31, 1);
  }
  static inline std::vector<trace::Trace> traces_;
  static inline std::vector<uarch::UarchConfig> configs_;
  static inline Dataset ds_;
};

TEST_F(SmallDataset, HeaderAndTargetsMatchDirectSimulation) {
  EXPECT_EQ(ds_.n(), 1417u);
  EXPECT_EQ(ds_.K, 2u);
  EXPECT_EQ(ds_.workload_ids, (std::vector<std::string>{"w0", "w1", "w2"}));
  EXPECT_EQ(ds_.offsets, (std::vector<std::uint64_t>{0, 400, 417, 1417}));
  for (std::size_t w = 0; w < traces_.size(); ++w) {
    const auto fm = features::extract_features(traces_[w]);
    ASSERT_EQ(0, std::memcmp(fm.data.data(), ds_.feature_row(ds_.offsets[w]), fm.data.size() * 4));
    for (std::size_t j = 0; j < configs_.size(); ++j) {
      const auto lat = uarch::incremental_latencies(uarch::simulate(traces_[w], configs_[j]));
      for (std::size_t i = 0; i < lat.size(); ++i) {
        const float want = static_cast<float>(static_cast<double>(lat[i]) * configs_[j].clock_ps / 100.0);
        ASSERT_EQ(ds_.target_row(ds_.offsets[w] + i)[j], want) << w << " " << j << " " << i;
      }
    }
  }
}

TEST_F(SmallDataset, JobsDoNotChangeBytes) {
  std::ostringstream a, b;
  write_dataset(a, ds_);
  write_dataset(b, build_dataset(traces_, configs_, 31, 3));
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(SmallDataset, RoundTripIsBitExact) {
  std::stringstream ss;
  write_dataset(ss, ds_);
  EXPECT_EQ(ss.str().size(), 4 + 4 + 8 + 4 * 3 + (4 + configs_[0].config_id.size()) +
                                 (4 + configs_[1].config_id.size()) + 4 + 3 * (8 + 4 + 2) +
                                 ds_.n() * (30 + 2) * 4);
  EXPECT_EQ(read_dataset(ss), ds_);
}

TEST_F(SmallDataset, CorruptFilesAreFormatErrors) {
  std::ostringstream out;
  write_dataset(out, ds_);
  const std::string bytes = out.str();
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_dataset(in); }), ErrorKind::kFormat);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_dataset(in); }), ErrorKind::kFormat);
  bad = bytes.substr(0, bytes.size() - 3);
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_dataset(in); }), ErrorKind::kFormat);
  bad = bytes + "x";
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_dataset(in); }), ErrorKind::kFormat);
}

TEST_F(SmallDataset, WindowsMatchBruteForceSlices) {
  const std::size_t c = 31, F = ds_.F;
  std::vector<std::size_t> idx;
  // every index within c of a workload boundary, plus random ones
  for (std::size_t w = 0; w < ds_.workloads(); ++w)
    for (std::size_t i = ds_.offsets[w]; i < std::min<std::size_t>(ds_.offsets[w] + c + 2, ds_.offsets[w + 1]); ++i)
      idx.push_back(i);
  Rng rng(3);
  for (int k = 0; k < 200; ++k) idx.push_back(static_cast<std::size_t>(rng.range(0, ds_.n() - 1)));
  const auto b = read_windows(ds_, idx, c);
  ASSERT_EQ(b.B, idx.size());
  for (std::size_t s = 0; s < idx.size(); ++s) {
    std::size_t w = 0;
    while (ds_.offsets[w + 1] <= idx[s]) ++w;
    const auto fm = features::extract_features(traces_[w]);
    const std::size_t pos = idx[s] - ds_.offsets[w];
    for (std::size_t r = 0; r <= c; ++r) {
      const long src = static_cast<long>(pos) - static_cast<long>(c) + static_cast<long>(r);
      for (std::size_t f = 0; f < F; ++f) {
        const double want = src < 0 ? 0.0 : fm.row(static_cast<std::size_t>(src))[f];
        ASSERT_EQ(b.x[(s * (c + 1) + r) * F + f], want) << idx[s] << " " << r << " " << f;
      }
    }
    for (std::size_t j = 0; j < ds_.K; ++j) EXPECT_EQ(b.t[s * ds_.K + j], ds_.target_row(idx[s])[j]);
  }
}

TEST_F(SmallDataset, FirstInstructionIsAllPadding) {
  const std::vector<std::size_t> idx = {ds_.offsets[1]};
  const auto b = read_windows(ds_, idx, 4);
  for (std::size_t k = 0; k < 4 * ds_.F; ++k) ASSERT_EQ(b.x[k], 0.0);
  for (std::size_t f = 0; f < ds_.F; ++f) EXPECT_EQ(b.x[4 * ds_.F + f], ds_.feature_row(400)[f]);
  const std::vector<std::size_t> oob = {ds_.n()};
  EXPECT_EQ(kind_of([&] { read_windows(ds_, oob, 4); }), ErrorKind::kInvalidArgument);
}

TEST(Store, PartialTargetsAreDataErrors) {
  features::FeatureMatrix fm;
  fm.rows = 3;
  fm.data.assign(3 * features::kNumFeatures, 0.0f);
  const std::vector<std::vector<std::vector<float>>> short_col = {{{1.0f, 2.0f}}};
  EXPECT_EQ(kind_of([&] { assemble_dataset({"a"}, {fm}, {"c"}, short_col, 31); }), ErrorKind::kData);
}

// Hand-assembled little-endian bytes for a 1-instruction, 1-config dataset.
TEST(Store, GoldenBytes) {
  Dataset ds;
  ds.K = 1;
  ds.C = 3;
  ds.config_ids = {"c"};
  ds.workload_ids = {"w"};
  ds.offsets = {0, 1};
  ds.features.assign(30, 0.0f);
  ds.features[0] = 1.0f;
  ds.targets = {2.5f};
  std::string want = "PVDS";
  want += std::string("\x01\x00\x00\x00", 4);
  want += std::string("\x01\x00\x00\x00\x00\x00\x00\x00", 8);
  want += std::string("\x1e\x00\x00\x00", 4);
  want += std::string("\x01\x00\x00\x00", 4);
  want += std::string("\x03\x00\x00\x00", 4);
  want += std::string("\x01\x00\x00\x00" "c", 5);
  want += std::string("\x01\x00\x00\x00", 4);
  want += std::string("\x00\x00\x00\x00\x00\x00\x00\x00", 8);
  want += std::string("\x01\x00\x00\x00" "w", 5);
  want += std::string("\x00\x00\x80\x3f", 4);  // 1.0f
  want += std::string(29 * 4, '\0');
  want += std::string("\x00\x00\x20\x40", 4);  // 2.5f
  std::ostringstream out;
  write_dataset(out, ds);
  EXPECT_EQ(out.str(), want);
}

TEST(Split, DefaultFractionsOnThousand) {
  const std::vector<std::uint64_t> offsets = {0, 1000};
  const auto s = split(offsets, {});
  EXPECT_EQ(s.train.size(), 900u);
  EXPECT_EQ(s.val.size(), 50u);
  EXPECT_EQ(s.test.size(), 50u);
}

TEST(Split, AllTrain) {
  const std::vector<std::uint64_t> offsets = {0, 300, 777};
  const auto s = split(offsets, {.train = 1.0, .val = 0.0, .test = 0.0});
  EXPECT_EQ(s.train.size(), 777u);
  EXPECT_TRUE(s.val.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(Split, DisjointExhaustiveDeterministic) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint64_t> offsets = {0};
    const int W = static_cast<int>(rng.range(1, 6));
    for (int w = 0; w < W; ++w) offsets.push_back(offsets.back() + static_cast<std::uint64_t>(rng.range(0, 3000)));
    const SplitSpec spec{.train = 0.8, .val = 0.15, .test = 0.05,
                         .seed = static_cast<std::uint64_t>(trial),
                         .block = static_cast<std::size_t>(rng.range(1, 500))};
    const auto s = split(offsets, spec);
    std::vector<std::size_t> all;
    for (const auto* v : {&s.train, &s.val, &s.test}) all.insert(all.end(), v->begin(), v->end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), offsets.back());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
    const auto again = split(offsets, spec);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.val, s.val);
    EXPECT_EQ(again.test, s.test);
  }
}

TEST(Split, BadFractionsRejected) {
  const std::vector<std::uint64_t> offsets = {0, 10};
  EXPECT_EQ(kind_of([&] { split(offsets, {.train = 0.9, .val = 0.2, .test = 0.0}); }),
            ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([&] { split(offsets, {.train = 1.1, .val = -0.1, .test = 0.0}); }),
            ErrorKind::kInvalidArgument);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  Checkpoint ck;
  ck.tensors["a"] = {{2, 3}, {1, 2, 3, 4, 5, -0.0}};
  ck.tensors["scalar"] = {{}, {3.5}};
  ck.text["meta.json"] = "{\"x\": 1}";
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string bytes = ss.str();
  EXPECT_EQ(read_checkpoint(ss), ck);
  std::string bad = bytes;
  bad[1] = 'Z';
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_checkpoint(in); }), ErrorKind::kFormat);
  bad = bytes.substr(0, bytes.size() - 1);
  EXPECT_EQ(kind_of([&] { std::istringstream in(bad); read_checkpoint(in); }), ErrorKind::kFormat);
  Checkpoint wrong;
  wrong.tensors["t"] = {{4}, {1, 2}};
  std::ostringstream out;
  EXPECT_EQ(kind_of([&] { write_checkpoint(out, wrong); }), ErrorKind::kShape);
}

}  // namespace
}  // namespace perfvec::store
