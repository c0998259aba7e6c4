// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/dse.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <json.hpp>
#include <ostream>
#include <set>
#include <thread>

#include "perfvec/error.hpp"
#include "perfvec/features.hpp"
#include "perfvec/rng.hpp"

namespace perfvec::dse {

std::vector<GridPoint> cache_grid() {
  std::vector<GridPoint> g;
  for (auto l1 : kL1dKb)
    for (auto l2 : kL2Kb) g.push_back({l1, l2});
  return g;
}

std::string grid_config_id(const GridPoint& p) {
  return "l1d" + std::to_string(p.l1d_kb) + "k_l2_" + std::to_string(p.l2_kb) + "k";
}

GridPoint parse_grid_config_id(const std::string& id) {
  unsigned l1 = 0, l2 = 0;
  char tail = 0;
  const int got = std::sscanf(id.c_str(), "l1d%uk_l2_%uk%c", &l1, &l2, &tail);
  require(got == 2, ErrorKind::kInvalidArgument, "'" + id + "' is not a grid config id");
  return {l1, l2};
}

std::vector<uarch::UarchConfig> grid_configs(const uarch::UarchConfig& base,
                                             const std::vector<GridPoint>& points) {
  std::vector<uarch::UarchConfig> out;
  for (const auto& p : points) {
    auto c = uarch::with_cache_sizes(base, p.l1d_kb, p.l2_kb);
    c.config_id = grid_config_id(p);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<GridPoint> sample_grid(std::size_t count, std::uint64_t seed) {
  auto g = cache_grid();
  require(count >= 1 && count <= g.size(), ErrorKind::kInvalidArgument,
          "sample size must be in 1..36");
  std::vector<std::size_t> idx(g.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0xD5E));
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<GridPoint> out;
  for (auto i : idx) out.push_back(g[i]);
  return out;
}

std::array<double, 2> normalize(const GridPoint& p) {
  const double l1lo = std::log2(kL1dKb.front()), l1hi = std::log2(kL1dKb.back());
  const double l2lo = std::log2(kL2Kb.front()), l2hi = std::log2(kL2Kb.back());
  return {(std::log2(p.l1d_kb) - l1lo) / (l1hi - l1lo), (std::log2(p.l2_kb) - l2lo) / (l2hi - l2lo)};
}

// --- parameter model ------------------------------------------------------

UarchParamModel UarchParamModel::create(std::size_t d, std::size_t hidden, std::uint64_t seed) {
  require(d >= 1 && hidden >= 1, ErrorKind::kInvalidArgument, "parameter model needs d, hidden >= 1");
  UarchParamModel m;
  m.d_ = d;
  m.h_ = hidden;
  m.theta_.assign(2 * hidden + hidden + d * hidden + d, 0.0);
  Rng rng(mix_seed(seed, 0x9A3A));
  const double a1 = 1.0 / std::sqrt(2.0), a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < 2 * hidden; ++i) m.theta_[i] = rng.uniform(-a1, a1);
  double* w2 = m.theta_.data() + 3 * hidden;
  for (std::size_t i = 0; i < d * hidden; ++i) w2[i] = rng.uniform(-a2, a2);
  m.Q.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) m.Q[i * d + i] = 1.0;
  return m;
}

std::vector<double> UarchParamModel::raw(const std::array<double, 2>& x) const {
  const double *w1 = theta_.data(), *b1 = w1 + 2 * h_, *w2 = b1 + h_, *b2 = w2 + d_ * h_;
  std::vector<double> a(h_), out(d_);
  for (std::size_t i = 0; i < h_; ++i) a[i] = std::tanh(w1[2 * i] * x[0] + w1[2 * i + 1] * x[1] + b1[i]);
  for (std::size_t r = 0; r < d_; ++r) {
    double s = b2[r];
    for (std::size_t i = 0; i < h_; ++i) s += w2[r * h_ + i] * a[i];
    out[r] = s;
  }
  return out;
}

void UarchParamModel::backward(const std::array<double, 2>& x, std::span<const double> d_out,
                               std::span<double> grad) const {
  const double *w1 = theta_.data(), *b1 = w1 + 2 * h_, *w2 = b1 + h_;
  double *g1 = grad.data(), *gb1 = g1 + 2 * h_, *g2 = gb1 + h_, *gb2 = g2 + d_ * h_;
  for (std::size_t i = 0; i < h_; ++i) {
    const double a = std::tanh(w1[2 * i] * x[0] + w1[2 * i + 1] * x[1] + b1[i]);
    double da = 0.0;
    for (std::size_t r = 0; r < d_; ++r) {
      g2[r * h_ + i] += d_out[r] * a;
      da += d_out[r] * w2[r * h_ + i];
    }
    const double dz = da * (1.0 - a * a);
    g1[2 * i] += dz * x[0];
    g1[2 * i + 1] += dz * x[1];
    gb1[i] += dz;
  }
  for (std::size_t r = 0; r < d_; ++r) gb2[r] += d_out[r];
}

std::vector<double> UarchParamModel::embed(const GridPoint& p) const {
  const auto z = raw(normalize(p));
  std::vector<double> m(d_, 0.0);
  for (std::size_t r = 0; r < d_; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d_; ++c) s += Q[r * d_ + c] * z[c];
    m[r] = scale * s;
  }
  return m;
}

store::Checkpoint UarchParamModel::to_checkpoint() const {
  store::Checkpoint ck;
  const double *w1 = theta_.data(), *b1 = w1 + 2 * h_, *w2 = b1 + h_, *b2 = w2 + d_ * h_;
  ck.tensors["dse/w1"] = {{h_, 2}, {w1, w1 + 2 * h_}};
  ck.tensors["dse/b1"] = {{h_}, {b1, b1 + h_}};
  ck.tensors["dse/w2"] = {{d_, h_}, {w2, w2 + d_ * h_}};
  ck.tensors["dse/b2"] = {{d_}, {b2, b2 + d_}};
  ck.tensors["dse/q"] = {{d_, d_}, Q};
  nlohmann::json meta = {{"d", d_}, {"hidden", h_}, {"scale", scale}};
  ck.text["dse.json"] = meta.dump(2);
  return ck;
}

UarchParamModel UarchParamModel::from_checkpoint(const store::Checkpoint& ck) {
  const auto it = ck.text.find("dse.json");
  require(it != ck.text.end(), ErrorKind::kFormat, "checkpoint has no dse.json section");
  UarchParamModel m;
  try {
    const auto meta = nlohmann::json::parse(it->second);
    m = create(meta.at("d").get<std::size_t>(), meta.at("hidden").get<std::size_t>(), 0);
    m.scale = meta.at("scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("dse.json: ") + e.what());
  }
  auto take = [&](const std::string& name, double* dst, std::size_t n) {
    const auto t = ck.tensors.find(name);
    require(t != ck.tensors.end(), ErrorKind::kFormat, "checkpoint lacks tensor '" + name + "'");
    require(t->second.data.size() == n, ErrorKind::kShape, "tensor '" + name + "' has the wrong size");
    std::copy(t->second.data.begin(), t->second.data.end(), dst);
  };
  const std::size_t h = m.h_, d = m.d_;
  double* p = m.theta_.data();
  take("dse/w1", p, 2 * h);
  take("dse/b1", p + 2 * h, h);
  take("dse/w2", p + 3 * h, d * h);
  take("dse/b2", p + 3 * h + d * h, d);
  take("dse/q", m.Q.data(), d * d);
  return m;
}

model::TrainConfig param_model_defaults() {
  model::TrainConfig tc;
  tc.epochs = 4000;
  tc.lr0 = 1e-2;
  tc.decay_every = 1500;
  return tc;
}

ParamTrainResult train_param_model(const model::Encoder& frozen, const store::Dataset& tuning,
                                   std::span<const std::size_t> indices,
                                   const std::vector<GridPoint>& points,
                                   const model::TrainConfig& tc, std::size_t hidden) {
  const std::size_t K = tuning.K, d = frozen.config().d, n = indices.size();
  require(points.size() == K, ErrorKind::kShape, "need one grid point per tuning config");
  const std::set<std::pair<std::uint32_t, std::uint32_t>> distinct = [&] {
    std::set<std::pair<std::uint32_t, std::uint32_t>> s;
    for (const auto& p : points) s.insert({p.l1d_kb, p.l2_kb});
    return s;
  }();
  require(distinct.size() >= 2, ErrorKind::kData,
          "insufficient coverage: the tuning set must span at least two distinct configs");
  require(tuning.workloads() >= 2, ErrorKind::kPrecondition,
          "the tuning set must come from at least two workloads");
  require(n > 0, ErrorKind::kData, "empty tuning set");

  const std::vector<double> R = model::dataset_representations(frozen, tuning, indices, tc.mask);
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> Rm(R.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd T(n, K);
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < K; ++j) {
      T(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = tuning.target_row(indices[s])[j];
      sum += tuning.target_row(indices[s])[j];
    }
  // One scale for every config: the network has to share it across the grid.
  const double scale = sum > 0.0 ? sum / static_cast<double>(n * K) : 1.0;
  T /= scale;

  Eigen::MatrixXd G = (Rm.transpose() * Rm) / static_cast<double>(n);
  G.diagonal().array() += 1e-12 * std::max(G.trace() / static_cast<double>(d), 1e-300);
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  require(llt.info() == Eigen::Success, ErrorKind::kData, "tuning representations are degenerate");
  const Eigen::MatrixXd Linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
  // In the whitened basis z = L^T M the per-config loss is |z - b_j|^2 + resid_j.
  const Eigen::MatrixXd Bm = Linv * (Rm.transpose() * T) / static_cast<double>(n);  // d x K
  std::vector<double> resid(K);
  for (std::size_t j = 0; j < K; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    resid[j] = std::max(0.0, T.col(jj).squaredNorm() / static_cast<double>(n) - Bm.col(jj).squaredNorm());
  }

  ParamTrainResult res;
  UarchParamModel& pm = res.model;
  pm = UarchParamModel::create(d, hidden, tc.seed);
  pm.scale = scale;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      pm.Q[r * d + c] = Linv(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));

  std::vector<std::array<double, 2>> xs;
  for (const auto& p : points) xs.push_back(normalize(p));
  model::Adam opt(pm.params().size(), tc.beta1, tc.beta2, tc.eps);
  std::vector<double> grad(pm.params().size()), dz(d);
  auto loss_at = [&](bool with_grad) {
    double loss = 0.0;
    if (with_grad) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      const auto z = pm.raw(xs[j]);
      double l = resid[j];
      for (std::size_t r = 0; r < d; ++r) {
        const double e = z[r] - Bm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        l += e * e;
        dz[r] = 2.0 * e / static_cast<double>(K);
      }
      loss += l;
      if (with_grad) pm.backward(xs[j], dz, grad);
    }
    return loss / static_cast<double>(K);
  };
  for (std::size_t step = 0; step < tc.epochs; ++step) {
    const double lr = model::lr_at(tc, step);
    const double loss = loss_at(true);
    if (!std::isfinite(loss))
      fail(ErrorKind::kDivergence, "parameter-model loss became non-finite at step " + std::to_string(step));
    opt.step(pm.params(), grad, lr);
    model::EpochLog log;
    log.epoch = step;
    log.lr = lr;
    log.train_loss = loss;
    log.val_loss = loss;
    res.log.push_back(log);
    if (tc.on_epoch) tc.on_epoch(log);
  }
  res.final_loss = loss_at(false) * scale * scale;
  return res;
}

// --- exploration ----------------------------------------------------------

double objective(double l1d_kb, double l2_kb, double time) {
  require(l1d_kb > 0 && l2_kb > 0 && time >= 0, ErrorKind::kInvalidArgument,
          "objective needs positive cache sizes and a non-negative time");
  return (1000.0 + 10.0 * l1d_kb + l2_kb) * time;
}

void rank_points(std::vector<DesignPoint>& pts) {
  std::sort(pts.begin(), pts.end(), [](const DesignPoint& a, const DesignPoint& b) {
    if (a.objective != b.objective) return a.objective < b.objective;
    const auto ca = a.p.l1d_kb + a.p.l2_kb, cb = b.p.l1d_kb + b.p.l2_kb;
    if (ca != cb) return ca < cb;
    return a.p.l1d_kb < b.p.l1d_kb;
  });
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i].rank = i + 1;
}

std::vector<DesignPoint> explore(const UarchParamModel& pm,
                                 const compose::ProgramRepresentation& program,
                                 const std::vector<GridPoint>& grid) {
  std::vector<DesignPoint> pts;
  for (const auto& p : grid) {
    DesignPoint dp;
    dp.p = p;
    dp.predicted_time = compose::predict_total_time(program, pm.embed(p));
    // A raw prediction can dip below zero; the objective is defined for time >= 0.
    dp.objective = objective(p.l1d_kb, p.l2_kb, std::max(0.0, dp.predicted_time));
    pts.push_back(dp);
  }
  rank_points(pts);
  return pts;
}

std::vector<DesignPoint> exhaustive(const trace::Trace& program, const uarch::UarchConfig& base,
                                    const std::vector<GridPoint>& grid, unsigned jobs) {
  const auto cfgs = grid_configs(base, grid);
  std::vector<double> times(cfgs.size());
  auto run = [&](std::size_t i) {
    times[i] = uarch::cycles_to_target(uarch::simulate(program, cfgs[i]).last(), cfgs[i].clock_ps);
  };
  const unsigned workers = std::max(1u, jobs);
  if (workers == 1) {
    for (std::size_t i = 0; i < cfgs.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cfgs.size(); i += workers) run(i);
      });
    for (auto& t : pool) t.join();
  }
  std::vector<DesignPoint> pts;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    DesignPoint dp;
    dp.p = grid[i];
    dp.simulated_time = times[i];
    dp.predicted_time = times[i];
    dp.objective = objective(grid[i].l1d_kb, grid[i].l2_kb, times[i]);
    pts.push_back(dp);
  }
  rank_points(pts);
  return pts;
}

void write_ranking(std::ostream& out, const std::string& program,
                   const std::vector<DesignPoint>& pts, bool header) {
  if (header) out << "program,l1_kb,l2_kb,predicted_time,simulated_time,objective,rank\n";
  for (const auto& p : pts) {
    out << program << ',' << p.p.l1d_kb << ',' << p.p.l2_kb << ','
        << compose::format_double(p.predicted_time) << ','
        << (p.simulated_time ? compose::format_double(*p.simulated_time) : std::string()) << ','
        << compose::format_double(p.objective) << ',' << p.rank << '\n';
  }
}

void write_surface(std::ostream& out, const std::vector<DesignPoint>& pts) {
  out << "l1_kb\\l2_kb";
  for (auto l2 : kL2Kb) out << ',' << l2;
  out << '\n';
  for (auto l1 : kL1dKb) {
    out << l1;
    for (auto l2 : kL2Kb) {
      const auto it = std::find_if(pts.begin(), pts.end(), [&](const DesignPoint& p) {
        return p.p.l1d_kb == l1 && p.p.l2_kb == l2;
      });
      out << ',' << (it == pts.end() ? std::string() : compose::format_double(it->objective));
    }
    out << '\n';
  }
}

std::vector<TilePoint> tiling_sweep(std::size_t n, const std::vector<std::size_t>& tiles,
                                    const uarch::UarchConfig& config,
                                    const model::Encoder& enc, std::span<const double> m,
                                    const features::FeatureMask& mask, std::uint64_t seed,
                                    unsigned jobs) {
  for (auto t : tiles)
    require(t >= 1 && std::has_single_bit(t) && n % t == 0, ErrorKind::kInvalidArgument,
            "tile " + std::to_string(t) + " is not a power of two dividing " + std::to_string(n));
  std::vector<TilePoint> out;
  for (auto t : tiles) {
    const trace::WorkloadParams params = {{"n", static_cast<double>(n)}, {"tile", static_cast<double>(t)}};
    const auto tr = trace::gen_workload(trace::WorkloadKind::kMatmulTiled, params, seed);
    const auto fm = features::extract_features(tr);
    const auto rp = compose::program_representation(enc, fm, mask, tr.workload_id, jobs);
    TilePoint tp;
    tp.tile = t;
    tp.instructions = tr.size();
    tp.predicted_time = compose::predict_total_time(rp, m);
    tp.simulated_time = uarch::cycles_to_target(uarch::simulate(tr, config).last(), config.clock_ps);
    out.push_back(tp);
  }
  return out;
}

void write_tiling(std::ostream& out, const std::vector<TilePoint>& pts) {
  out << "tile,instructions,predicted_time,simulated_time\n";
  for (const auto& p : pts)
    out << p.tile << ',' << p.instructions << ',' << compose::format_double(p.predicted_time) << ','
        << compose::format_double(p.simulated_time) << '\n';
}

}  // namespace perfvec::dse
