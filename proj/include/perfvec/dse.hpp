// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perfvec/compose.hpp"
#include "perfvec/model.hpp"
#include "perfvec/store.hpp"
#include "perfvec/trace.hpp"
#include "perfvec/uarch.hpp"

namespace perfvec::dse {

inline constexpr std::array<std::uint32_t, 6> kL1dKb = {4, 8, 16, 32, 64, 128};
inline constexpr std::array<std::uint32_t, 6> kL2Kb = {256, 512, 1024, 2048, 4096, 8192};

struct GridPoint {
  std::uint32_t l1d_kb = 0;
  std::uint32_t l2_kb = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

// 36 points, L1D-major.
std::vector<GridPoint> cache_grid();
std::string grid_config_id(const GridPoint& p);  // "l1d32k_l2_1024k"
GridPoint parse_grid_config_id(const std::string& id);
// Grid configs built from `base` via with_cache_sizes, ids from grid_config_id.
std::vector<uarch::UarchConfig> grid_configs(const uarch::UarchConfig& base,
                                             const std::vector<GridPoint>& points);
// Seeded subset of `count` grid points, in grid order.
std::vector<GridPoint> sample_grid(std::size_t count, std::uint64_t seed);

// log2 of each size, rescaled to [0, 1] over the grid.
std::array<double, 2> normalize(const GridPoint& p);

// Two-layer network from normalized cache sizes to a d-dim embedding:
//   M(p) = scale * Q (W2 tanh(W1 x + b1) + b2)
// Q (d x d) and scale are fixed when training starts; Q maps the whitened
// representation basis back to the encoder's.
class UarchParamModel {
 public:
  UarchParamModel() = default;
  static UarchParamModel create(std::size_t d, std::size_t hidden, std::uint64_t seed);

  std::size_t d() const { return d_; }
  std::size_t hidden() const { return h_; }
  std::vector<double> embed(const GridPoint& p) const;  // 0.1 ns units

  std::span<double> params() { return theta_; }
  std::span<const double> params() const { return theta_; }
  // Network output before Q and scale.
  std::vector<double> raw(const std::array<double, 2>& x) const;
  // Accumulates d(loss)/d(theta) given d(loss)/d(raw output).
  void backward(const std::array<double, 2>& x, std::span<const double> d_out,
                std::span<double> grad) const;

  std::vector<double> Q;  // row-major d x d
  double scale = 1.0;

  store::Checkpoint to_checkpoint() const;
  static UarchParamModel from_checkpoint(const store::Checkpoint& ck);

 private:
  std::size_t d_ = 0, h_ = 0;
  std::vector<double> theta_;  // W1 (h x 2), b1 (h), W2 (d x h), b2 (d)
};

struct ParamTrainResult {
  UarchParamModel model;
  std::vector<model::EpochLog> log;  // one entry per Adam step, normalized units
  double final_loss = 0.0;           // mean over configs of the tuning MSE, 0.1 ns squared
};

// Defaults for train_param_model: 4000 full-batch steps, lr 1e-2 decayed 10x
// every 1500 steps.
model::TrainConfig param_model_defaults();

// `points[j]` are the cache sizes of config column j of `tuning`. The loss is
// the usual mean squared latency error over every tuning instruction and
// config; with the frozen encoder it only depends on the representations
// through R^T R and R^T t, so each step is exact but independent of n.
ParamTrainResult train_param_model(const model::Encoder& frozen, const store::Dataset& tuning,
                                   std::span<const std::size_t> indices,
                                   const std::vector<GridPoint>& points,
                                   const model::TrainConfig& tc, std::size_t hidden = 32);

// (1000 + 10 * l1d_kb + l2_kb) * time
double objective(double l1d_kb, double l2_kb, double time);

struct DesignPoint {
  GridPoint p;
  double predicted_time = 0.0;
  double objective = 0.0;
  std::size_t rank = 0;  // 1 = best
  std::optional<double> simulated_time;
  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

// Sorts by objective, then smaller l1d + l2, then smaller l1d; sets ranks.
void rank_points(std::vector<DesignPoint>& pts);

// Scores every grid point for one program. Pure dot products: no encoder runs.
std::vector<DesignPoint> explore(const UarchParamModel& pm,
                                 const compose::ProgramRepresentation& program,
                                 const std::vector<GridPoint>& grid);

// Ranking by simulated time on the grid configs (objective uses simulated time).
std::vector<DesignPoint> exhaustive(const trace::Trace& program, const uarch::UarchConfig& base,
                                    const std::vector<GridPoint>& grid, unsigned jobs = 1);

// CSV with columns program,l1_kb,l2_kb,predicted_time,simulated_time,objective,rank.
void write_ranking(std::ostream& out, const std::string& program,
                   const std::vector<DesignPoint>& pts, bool header = true);
// 6 x 6 objective grid: header "l1_kb\\l2_kb,256,...", one row per L1D size.
void write_surface(std::ostream& out, const std::vector<DesignPoint>& pts);

struct TilePoint {
  std::size_t tile = 0;
  std::uint64_t instructions = 0;
  double predicted_time = 0.0;  // 0.1 ns
  double simulated_time = 0.0;  // 0.1 ns
};

// Tiles must be powers of two dividing n.
std::vector<TilePoint> tiling_sweep(std::size_t n, const std::vector<std::size_t>& tiles,
                                    const uarch::UarchConfig& config,
                                    const model::Encoder& enc, std::span<const double> m,
                                    const features::FeatureMask& mask, std::uint64_t seed = 1,
                                    unsigned jobs = 1);

void write_tiling(std::ostream& out, const std::vector<TilePoint>& pts);

}  // namespace perfvec::dse
