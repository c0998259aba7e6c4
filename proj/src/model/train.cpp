// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include <Eigen/Dense>

#include "perfvec/error.hpp"
#include "perfvec/model.hpp"
#include "perfvec/rng.hpp"
#include "perfvec/simd.hpp"

namespace perfvec::model {

std::size_t UarchTable::index(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  require(it != ids.end(), ErrorKind::kNotFound, "no table row for config '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

void UarchTable::add(const std::string& id, std::span<const double> m) {
  if (ids.empty() && d == 0) d = m.size();
  require(m.size() == d, ErrorKind::kShape, "table row has the wrong dimension");
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it != ids.end()) {
    std::copy(m.begin(), m.end(), row(static_cast<std::size_t>(it - ids.begin())).begin());
    return;
  }
  ids.push_back(id);
  rows.insert(rows.end(), m.begin(), m.end());
}

namespace {

// Batch predictions and errors: E = R M^T - targets, returns sum of squares.
double batch_errors(const double* R, std::size_t B, std::size_t d, const double* M, std::size_t K,
                    const double* targets, double* E) {
  std::fill_n(E, B * K, 0.0);
  simd::kernels().gemm_nt(B, K, d, R, d, M, d, E, K);
  double sse = 0.0;
  for (std::size_t i = 0; i < B * K; ++i) {
    E[i] -= targets[i];
    sse += E[i] * E[i];
  }
  return sse;
}

}  // namespace

double loss_and_grads(const Encoder& enc, const UarchTable& table, std::size_t B,
                      const double* targets, Workspace& ws, Gradients& g) {
  const std::size_t d = enc.config().d, K = table.k();
  require(table.d == d, ErrorKind::kShape, "table and encoder dimensions differ");
  require(K >= 1, ErrorKind::kData, "no target configs");
  require(B >= 1, ErrorKind::kData, "empty batch");
  for (std::size_t i = 0; i < B * K; ++i)
    require(std::isfinite(targets[i]), ErrorKind::kData, "missing or non-finite target");
  std::vector<double> R(B * d), E(B * K), dR(B * d, 0.0);
  ws.forward(enc, B, R.data());
  const double sse = batch_errors(R.data(), B, d, table.rows.data(), K, targets, E.data());
  const double scale = 2.0 / static_cast<double>(B * K);
  for (auto& e : E) e *= scale;
  g.table.assign(K * d, 0.0);
  g.enc.assign(enc.num_params(), 0.0);
  const auto& k = simd::kernels();
  k.gemm_nn(B, d, K, E.data(), K, table.rows.data(), d, dR.data(), d);
  k.gemm_tn(K, d, B, E.data(), K, R.data(), d, g.table.data(), d);
  ws.backward(enc, dR.data(), g.enc.data());
  return sse / static_cast<double>(B * K);
}

// --- gradient check -------------------------------------------------------

GradCheckResult grad_check(Encoder enc, UarchTable table, std::span<const double> windows,
                           std::span<const double> targets, std::size_t B,
                           const GradCheckOptions& opt) {
  require(opt.epsilon >= 1e-7 && opt.epsilon <= 1e-3, ErrorKind::kInvalidArgument,
          "grad_check epsilon must lie in [1e-7, 1e-3]");
  const auto& cfg = enc.config();
  const std::size_t block = cfg.T() * cfg.F;
  require(windows.size() == B * block, ErrorKind::kShape, "grad_check windows have the wrong size");
  require(targets.size() == B * table.k(), ErrorKind::kShape, "grad_check targets have the wrong size");
  GradCheckResult res;
  const std::size_t n_enc = enc.num_params(), n_tab = table.rows.size();
  if (n_enc + n_tab == 0 || B == 0) return res;

  Workspace ws;
  ws.reserve(cfg, B);
  auto load = [&] {
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(windows.data() + b * block, block, ws.input(b));
  };
  auto loss_at = [&] {
    load();
    Gradients scratch;
    return loss_and_grads(enc, table, B, targets.data(), ws, scratch);
  };
  load();
  Gradients g;
  loss_and_grads(enc, table, B, targets.data(), ws, g);
  if (opt.mutate) opt.mutate(g);

  // Probe list: one entry from every tensor and the table, the rest random.
  Rng rng(mix_seed(opt.seed, 0x6C4E));
  std::vector<std::size_t> probes;  // indices into [enc | table]
  for (const auto& t : enc.tensors())
    if (t.size() > 0) probes.push_back(t.offset + static_cast<std::size_t>(rng.range(0, t.size() - 1)));
  if (n_tab > 0) probes.push_back(n_enc + static_cast<std::size_t>(rng.range(0, n_tab - 1)));
  const std::size_t total = n_enc + n_tab;
  if (total <= opt.samples) {
    probes.resize(total);
    std::iota(probes.begin(), probes.end(), std::size_t{0});
  } else {
    while (probes.size() < opt.samples)
      probes.push_back(static_cast<std::size_t>(rng.range(0, total - 1)));
  }

  auto name_of = [&](std::size_t idx) -> std::string {
    if (idx >= n_enc) return "uarch_table";
    for (const auto& t : enc.tensors())
      if (idx >= t.offset && idx < t.offset + t.size()) return t.name;
    return "?";
  };
  for (std::size_t idx : probes) {
    double& p = idx < n_enc ? enc.params()[idx] : table.rows[idx - n_enc];
    const double analytic = idx < n_enc ? g.enc[idx] : g.table[idx - n_enc];
    const double saved = p;
    const double h = opt.epsilon;
    auto at = [&](double delta) {
      p = saved + delta;
      return loss_at();
    };
    const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12.0 * h);
    p = saved;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic - numeric) / denom;
    ++res.checked;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = name_of(idx);
    }
  }
  return res;
}

// --- Adam -----------------------------------------------------------------

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
  require(params.size() == m_.size() && grads.size() == m_.size(), ErrorKind::kShape,
          "optimizer state size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

double lr_at(const TrainConfig& tc, std::size_t epoch) {
  const std::size_t steps = tc.decay_every == 0 ? 0 : epoch / tc.decay_every;
  return tc.lr0 * std::pow(tc.lr_decay, static_cast<double>(steps));
}

// --- training -------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void apply_mask_rows(double* x, std::size_t rows, std::size_t F, const features::FeatureMask& mask) {
  if (mask.all()) return;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x + r * F;
    if (!mask.stack_distance)
      std::fill(row + features::col::kSdFetch, row + features::col::kEntropyLocal, 0.0);
    if (!mask.branch_entropy) {
      row[features::col::kEntropyLocal] = 0.0;
      row[features::col::kEntropyGlobal] = 0.0;
    }
  }
}

// Writes the windows of `idx` into ws and the scaled targets into t.
void permute_registers(double* x, std::size_t rows, std::size_t F, Rng& rng) {
  static constexpr std::size_t kCols[3][2] = {{features::col::kDst, features::col::kDstValid},
                                              {features::col::kSrc1, features::col::kSrc1Valid},
                                              {features::col::kSrc2, features::col::kSrc2Valid}};
  if (F <= features::col::kSrc2Valid) return;
  std::array<std::uint8_t, 32> pi;
  std::iota(pi.begin(), pi.end(), std::uint8_t{0});
  for (std::size_t i = pi.size(); i > 1; --i)
    std::swap(pi[i - 1], pi[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x + r * F;
    for (const auto& c : kCols) {
      if (row[c[1]] != 1.0) continue;
      const long v = std::lround(row[c[0]] * 32.0);
      if (v >= 0 && v < 32) row[c[0]] = pi[static_cast<std::size_t>(v)] / 32.0;
    }
  }
}

void load_batch(const store::Dataset& ds, std::span<const std::size_t> idx, std::size_t c,
                const features::FeatureMask& mask, const std::vector<double>& inv_scale,
                Workspace& ws, double* t) {
  const std::size_t F = ds.F, K = ds.K;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const std::size_t i = idx[b];
    const std::size_t start = ds.offsets[ds.workload_of(i)];
    double* x = ws.input(b);
    store::fill_window(ds.feature_row(start), F, i - start, c, x);
    apply_mask_rows(x, c + 1, F, mask);
    if (t != nullptr)
      for (std::size_t j = 0; j < K; ++j) t[b * K + j] = ds.target_row(i)[j] * inv_scale[j];
  }
}

double evaluate(const Encoder& enc, const UarchTable& table, const store::Dataset& ds,
                std::span<const std::size_t> idx, const TrainConfig& tc,
                const std::vector<double>& inv_scale, Workspace& ws) {
  if (idx.empty()) return 0.0;
  const std::size_t d = enc.config().d, K = ds.K, B = tc.batch;
  std::vector<double> R(B * d), t(B * K), E(B * K);
  double sse = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += B) {
    const std::size_t nb = std::min(B, idx.size() - s);
    load_batch(ds, idx.subspan(s, nb), enc.config().c, tc.mask, inv_scale, ws, t.data());
    ws.forward(enc, nb, R.data());
    sse += batch_errors(R.data(), nb, d, table.rows.data(), K, t.data(), E.data());
  }
  return sse / static_cast<double>(idx.size() * K);
}

}  // namespace

TrainResult train_foundation(const store::Dataset& ds, const store::Split& split,
                             const ModelConfig& mc, const TrainConfig& tc) {
  require(ds.n() > 0 && !split.train.empty(), ErrorKind::kData, "empty training set");
  require(ds.F == mc.F, ErrorKind::kShape, "dataset feature width differs from the model");
  require(tc.batch >= 1, ErrorKind::kInvalidArgument, "batch size must be positive");
  require(split.train.size() >= tc.batch, ErrorKind::kData, "fewer training samples than one batch");
  const std::size_t K = ds.K, d = mc.d, B = tc.batch;

  std::vector<double> scale(K, 1.0), inv(K, 1.0);
  if (tc.normalize) {
    for (std::size_t j = 0; j < K; ++j) {
      double sum = 0.0;
      for (std::size_t i : split.train) sum += ds.target_row(i)[j];
      const double mean = sum / static_cast<double>(split.train.size());
      scale[j] = mean > 0.0 ? mean : 1.0;
      inv[j] = 1.0 / scale[j];
    }
  }

  TrainResult res;
  Encoder enc = Encoder::create(mc, tc.seed);
  UarchTable table;
  table.d = d;
  table.ids = ds.config_ids;
  table.rows.resize(K * d);
  {
    Rng rng(mix_seed(tc.seed, 0x7AB1E));
    const double a = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : table.rows) v = rng.uniform(-a, a);
  }

  Adam opt_enc(enc.num_params(), tc.beta1, tc.beta2, tc.eps);
  Adam opt_tab(table.rows.size(), tc.beta1, tc.beta2, tc.eps);
  Workspace ws;
  ws.reserve(mc, B);
  Gradients g;
  std::vector<double> t(B * K);

  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  std::vector<std::size_t> val(split.val.begin(), split.val.end());
  if (tc.val_samples > 0 && val.size() > tc.val_samples) {
    Rng vr(mix_seed(tc.seed, 0x7A1));
    for (std::size_t i = val.size(); i > 1; --i)
      std::swap(val[i - 1], val[static_cast<std::size_t>(vr.range(0, static_cast<std::int64_t>(i) - 1))]);
    val.resize(tc.val_samples);
    std::sort(val.begin(), val.end());
  }

  Encoder best_enc = enc;
  UarchTable best_tab = table;
  res.best_val = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_at(tc, epoch);
    Rng rng(mix_seed(tc.seed, 0xE90C + epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);
    const std::size_t n_ep = tc.samples_per_epoch > 0 ? std::min(tc.samples_per_epoch, order.size())
                                                       : order.size();
    const std::uint64_t f0 = ws.forward_count, b0 = ws.backward_count;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < n_ep; s += B) {
      const std::size_t nb = std::min(B, n_ep - s);
      load_batch(ds, std::span(order).subspan(s, nb), mc.c, tc.mask, inv, ws, t.data());
      if (tc.augment_registers)
        for (std::size_t b = 0; b < nb; ++b) permute_registers(ws.input(b), mc.c + 1, ds.F, rng);
      const double loss = loss_and_grads(enc, table, nb, t.data(), ws, g);
      if (!std::isfinite(loss))
        fail(ErrorKind::kDivergence, "training loss became non-finite in epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(nb);
      seen += nb;
      opt_enc.step(enc.params(), g.enc, lr);
      opt_tab.step(table.rows, g.table, lr);
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.forward_calls = ws.forward_count - f0;
    log.backward_calls = ws.backward_count - b0;
    log.train_loss = loss_sum / static_cast<double>(seen);
    const std::uint64_t fv = ws.forward_count;
    log.val_loss = val.empty() ? log.train_loss : evaluate(enc, table, ds, val, tc, inv, ws);
    ws.forward_count = fv;  // validation passes are not training invocations
    if (!std::isfinite(log.val_loss))
      fail(ErrorKind::kDivergence, "validation loss became non-finite in epoch " + std::to_string(epoch));
    log.seconds = seconds_since(t0);
    if (log.val_loss < res.best_val) {
      res.best_val = log.val_loss;
      res.best_epoch = epoch;
      best_enc = enc;
      best_tab = table;
    }
    res.log.push_back(log);
    if (tc.on_epoch) tc.on_epoch(log);
  }
  res.encoder = std::move(best_enc);
  res.table = std::move(best_tab);
  for (std::size_t j = 0; j < K; ++j)
    for (auto& v : res.table.row(j)) v *= scale[j];
  res.scales = scale;
  return res;
}

// --- representations ------------------------------------------------------

std::vector<double> dataset_representations(const Encoder& enc, const store::Dataset& ds,
                                            std::span<const std::size_t> indices,
                                            const features::FeatureMask& mask,
                                            std::uint64_t* forward_calls) {
  const auto& mc = enc.config();
  require(ds.F == mc.F, ErrorKind::kShape, "dataset feature width differs from the model");
  const std::size_t B = 256, d = mc.d;
  Workspace ws;
  ws.reserve(mc, B);
  std::vector<double> R(indices.size() * d);
  const std::vector<double> unit(ds.K, 1.0);
  for (std::size_t s = 0; s < indices.size(); s += B) {
    const std::size_t nb = std::min(B, indices.size() - s);
    load_batch(ds, indices.subspan(s, nb), mc.c, mask, unit, ws, nullptr);
    ws.forward(enc, nb, R.data() + s * d);
  }
  if (forward_calls != nullptr) *forward_calls += ws.forward_count;
  return R;
}

void encode_trace(const Encoder& enc, const features::FeatureMatrix& fm,
                  const features::FeatureMask& mask, const ReprSink& sink, unsigned jobs,
                  std::uint64_t* forward_calls) {
  const auto& mc = enc.config();
  require(mc.F == features::kNumFeatures, ErrorKind::kShape, "encoder feature width mismatch");
  const std::size_t B = 256, d = mc.d, n = fm.rows;
  auto run_range = [&](Workspace& ws, std::size_t first, std::size_t count, double* out) {
    for (std::size_t s = 0; s < count; s += B) {
      const std::size_t nb = std::min(B, count - s);
      for (std::size_t b = 0; b < nb; ++b) {
        double* x = ws.input(b);
        store::fill_window(fm.data.data(), mc.F, first + s + b, mc.c, x);
        apply_mask_rows(x, mc.c + 1, mc.F, mask);
      }
      ws.forward(enc, nb, out + s * d);
    }
  };
  const unsigned workers = std::max(1u, jobs);
  const std::size_t chunk = 4096;
  std::vector<Workspace> ws(workers);
  for (auto& w : ws) w.reserve(mc, B);
  std::vector<std::vector<double>> bufs(workers, std::vector<double>(chunk * d));
  for (std::size_t base = 0; base < n; base += chunk * workers) {
    auto job = [&](unsigned w) {
      const std::size_t first = base + w * chunk;
      if (first < n) run_range(ws[w], first, std::min(chunk, n - first), bufs[w].data());
    };
    if (workers == 1) {
      job(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(job, w);
      for (auto& th : pool) th.join();
    }
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t first = base + w * chunk;
      if (first < n) sink(first, std::min(chunk, n - first), bufs[w].data());
    }
  }
  if (forward_calls != nullptr)
    for (const auto& w : ws) *forward_calls += w.forward_count;
}

double table_loss(std::span<const double> R, std::size_t d, std::span<const double> targets,
                  std::size_t K, std::size_t j, std::span<const double> m) {
  const std::size_t n = R.size() / d;
  if (n == 0) return 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = simd::kernels().dot(R.data() + i * d, m.data(), d) - targets[i * K + j];
    sse += e * e;
  }
  return sse / static_cast<double>(n);
}

// --- fine-tuning ----------------------------------------------------------

TrainConfig finetune_defaults() {
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch = 64;
  tc.lr0 = 0.1;
  tc.decay_every = 20;
  return tc;
}

FinetuneResult finetune_uarch(const Encoder& frozen, const store::Dataset& tuning,
                              std::span<const std::size_t> indices, const TrainConfig& tc) {
  require(!indices.empty(), ErrorKind::kData, "empty tuning set");
  const std::size_t d = frozen.config().d, K = tuning.K, n = indices.size();
  const std::size_t B = std::max<std::size_t>(1, tc.batch);
  const std::vector<double> R = dataset_representations(frozen, tuning, indices, tc.mask);
  // Frozen representations are strongly collinear. Adam runs on rows z of
  // the whitened features Rw = R L^-T (L L^T = R^T R / n + lambda I); M = L^-T z.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> Rm(R.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd G = (Rm.transpose() * Rm) / static_cast<double>(n);
  const double mean_eig = std::max(G.trace() / static_cast<double>(d), 1e-300);
  require(tc.ridge >= 0.0, ErrorKind::kInvalidArgument, "ridge must be non-negative");
  const double lambda = tc.ridge * mean_eig;
  G.diagonal().array() += lambda + 1e-12 * mean_eig;
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  require(llt.info() == Eigen::Success, ErrorKind::kData, "tuning representations are degenerate");
  const Eigen::MatrixXd Linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
  // penalty gradient in z: 2 lambda L^-1 L^-T z
  const Eigen::MatrixXd P = Linv * Linv.transpose();
  std::vector<double> Rw(n * d);
  Eigen::Map<RowMat>(Rw.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) =
      Rm * Linv.transpose();
  std::vector<double> T(n * K);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < K; ++j) T[s * K + j] = tuning.target_row(indices[s])[j];

  std::vector<double> scale(K, 1.0);
  if (tc.normalize)
    for (std::size_t j = 0; j < K; ++j) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) sum += T[s * K + j];
      scale[j] = sum > 0.0 ? sum / static_cast<double>(n) : 1.0;
    }
  std::vector<double> Tn(T);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < K; ++j) Tn[s * K + j] /= scale[j];

  FinetuneResult res;
  UarchTable& table = res.table;
  table.d = d;
  table.ids = tuning.config_ids;
  table.rows.assign(K * d, 0.0);
  Adam opt(table.rows.size(), tc.beta1, tc.beta2, tc.eps);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> Rb(B * d), tb(B * K), E(B * K), grad(K * d);
  const auto& k = simd::kernels();
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at(tc, epoch);
    Rng rng(mix_seed(tc.seed, 0xF17E + epoch));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(i) - 1))]);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < n; s += B) {
      const std::size_t nb = std::min(B, n - s);
      for (std::size_t b = 0; b < nb; ++b) {
        std::copy_n(Rw.data() + order[s + b] * d, d, Rb.data() + b * d);
        std::copy_n(Tn.data() + order[s + b] * K, K, tb.data() + b * K);
      }
      loss_sum += batch_errors(Rb.data(), nb, d, table.rows.data(), K, tb.data(), E.data());
      const double sc = 2.0 / static_cast<double>(nb * K);
      for (std::size_t i = 0; i < nb * K; ++i) E[i] *= sc;
      std::fill(grad.begin(), grad.end(), 0.0);
      k.gemm_tn(K, d, nb, E.data(), K, Rb.data(), d, grad.data(), d);
      if (lambda > 0.0)
        for (std::size_t j = 0; j < K; ++j) {
          const Eigen::Map<const Eigen::VectorXd> z(table.rows.data() + j * d, static_cast<Eigen::Index>(d));
          Eigen::Map<Eigen::VectorXd>(grad.data() + j * d, static_cast<Eigen::Index>(d)) +=
              (2.0 * lambda / static_cast<double>(K)) * (P * z);
        }
      opt.step(table.rows, grad, lr);
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(n * K);
    log.val_loss = log.train_loss;
    if (!std::isfinite(log.train_loss))
      fail(ErrorKind::kDivergence, "fine-tuning loss became non-finite in epoch " + std::to_string(epoch));
    res.log.push_back(log);
    if (tc.on_epoch) tc.on_epoch(log);
  }
  for (std::size_t j = 0; j < K; ++j) {
    const Eigen::Map<const Eigen::VectorXd> z(table.row(j).data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd m = Linv.transpose() * z * scale[j];
    std::copy(m.data(), m.data() + d, table.row(j).begin());
  }
  double total = 0.0;
  for (std::size_t j = 0; j < K; ++j) total += table_loss(R, d, T, K, j, table.row(j));
  res.final_loss = total / static_cast<double>(K);
  return res;
}

}  // namespace perfvec::model
