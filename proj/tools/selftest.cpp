// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "perfvec/compose.hpp"
#include "perfvec/features.hpp"
#include "perfvec/model.hpp"
#include "perfvec/rng.hpp"

namespace perfvec::cli {
namespace {

// Distinct lines strictly between the previous access to `line` and now.
std::optional<std::uint64_t> brute_sd(const std::vector<std::uint64_t>& hist, std::uint64_t line) {
  std::set<std::uint64_t> seen;
  for (auto it = hist.rbegin(); it != hist.rend(); ++it) {
    if (*it == line) return seen.size();
    seen.insert(*it);
  }
  return std::nullopt;
}

bool stack_distance_check(std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < 20; ++trial) {
    features::StackDistanceEngine engine(4);
    std::array<std::vector<std::uint64_t>, 4> hist;
    const auto pool = static_cast<std::uint64_t>(rng.range(2, 300));
    for (int i = 0; i < 2000; ++i) {
      const int ch = static_cast<int>(rng.range(0, 3));
      const auto line = static_cast<std::uint64_t>(rng.range(0, static_cast<std::int64_t>(pool)));
      if (engine.observe(static_cast<features::SdChannel>(ch), line) != brute_sd(hist[ch], line))
        return false;
      hist[ch].push_back(line);
    }
  }
  return true;
}

struct GradSetup {
  model::Encoder enc;
  model::UarchTable table;
  std::vector<double> x, t;
  std::size_t B = 3;
};

GradSetup grad_setup(std::uint64_t seed) {
  GradSetup s;
  const model::ModelConfig mc{.c = 3, .d = 5, .L = 2};
  s.enc = model::Encoder::create(mc, seed);
  Rng rng(mix_seed(seed, 1));
  s.table.d = mc.d;
  for (int j = 0; j < 3; ++j) {
    std::vector<double> m(mc.d);
    for (auto& v : m) v = rng.uniform(-1, 1);
    s.table.add("c" + std::to_string(j), m);
  }
  s.x.resize(s.B * mc.T() * mc.F);
  for (auto& v : s.x) v = rng.uniform(0, 1);
  s.t.resize(s.B * 3);
  for (auto& v : s.t) v = rng.uniform(0, 2);
  return s;
}

}  // namespace

int run_selftest(std::ostream& out, std::uint64_t seed) {
  int failures = 0;
  auto report = [&](const char* name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << " " << detail << "\n";
    if (!ok) ++failures;
  };

  report("stack-distance-oracle", stack_distance_check(seed), "20 random sequences x 2000 accesses");

  auto s = grad_setup(seed);
  const auto gc = model::grad_check(s.enc, s.table, s.x, s.t, s.B, {.samples = 128, .seed = seed});
  report("grad-check", gc.max_rel_error < 1e-6, "max rel error " + std::to_string(gc.max_rel_error));
  model::GradCheckOptions bad{.samples = 128, .seed = seed};
  bad.mutate = [](model::Gradients& g) {
    for (auto& v : g.enc) v *= 1.01;
  };
  const auto gm = model::grad_check(s.enc, s.table, s.x, s.t, s.B, bad);
  report("grad-check-mutation", gm.max_rel_error > 1e-6,
         "corrupted gradient rel error " + std::to_string(gm.max_rel_error));

  Rng rng(mix_seed(seed, 2));
  const std::size_t n = 100000, d = 16;
  std::vector<double> R(n * d), m(d);
  for (auto& v : R) v = rng.uniform(0, 1);
  for (auto& v : m) v = rng.uniform(0.1, 2);
  double per = 0.0;
  for (std::size_t i = 0; i < n; ++i) per += model::predict_latency(std::span(R).subspan(i * d, d), m);
  const double comp = compose::predict_total_time(compose::sum_representations(R, d), m);
  const double rel = std::abs(per - comp) / std::abs(per);
  report("compositional-identity", rel < 1e-9, "rel error " + std::to_string(rel));

  return failures == 0 ? 0 : 1;
}

}  // namespace perfvec::cli
