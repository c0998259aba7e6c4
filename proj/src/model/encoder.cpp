// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cmath>

#include "perfvec/error.hpp"
#include "perfvec/model.hpp"
#include "perfvec/rng.hpp"
#include "perfvec/simd.hpp"

namespace perfvec::model {

namespace {
std::atomic<std::uint64_t> g_invocations{0};
}  // namespace

std::uint64_t encoder_invocations() { return g_invocations.load(std::memory_order_relaxed); }

std::string_view arch_name(Arch a) { return a == Arch::kLstm ? "lstm" : "mlp"; }

Arch parse_arch(std::string_view name) {
  if (name == "lstm") return Arch::kLstm;
  if (name == "mlp") return Arch::kMlp;
  fail(ErrorKind::kInvalidArgument, "unknown architecture '" + std::string(name) + "'");
}

Encoder::Encoder(const ModelConfig& cfg) : cfg_(cfg) {
  require(cfg.F >= 1 && cfg.d >= 1, ErrorKind::kShape, "F and d must be positive");
  std::size_t off = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), rows, cols, off});
    off += rows * cols;
  };
  const std::size_t d = cfg.d;
  if (cfg.arch == Arch::kLstm) {
    require(cfg.L >= 1, ErrorKind::kShape, "LSTM needs at least one layer");
    add("enc/in_w", d, cfg.F);
    add("enc/in_b", 1, d);
    for (std::size_t l = 0; l < cfg.L; ++l) {
      const std::string p = "enc/lstm" + std::to_string(l);
      add(p + "/w_x", 4 * d, d);
      add(p + "/w_h", 4 * d, d);
      add(p + "/b", 1, 4 * d);
    }
  } else {
    require(cfg.hidden >= 1, ErrorKind::kShape, "MLP hidden width must be positive");
    add("enc/mlp/w1", cfg.hidden, cfg.T() * cfg.F);
    add("enc/mlp/b1", 1, cfg.hidden);
    add("enc/mlp/w2", d, cfg.hidden);
    add("enc/mlp/b2", 1, d);
  }
  theta_.assign(off, 0.0);
}

Encoder Encoder::zeros(const ModelConfig& cfg) { return Encoder(cfg); }

Encoder Encoder::create(const ModelConfig& cfg, std::uint64_t seed) {
  Encoder e(cfg);
  Rng rng(mix_seed(seed, 0xE11C));
  for (const auto& t : e.tensors_) {
    double* p = e.theta_.data() + t.offset;
    const bool bias = t.rows == 1;
    if (bias) {
      if (t.name.ends_with("/b") && cfg.arch == Arch::kLstm)
        std::fill(p + cfg.d, p + 2 * cfg.d, 1.0);  // forget gate
      continue;
    }
    const double fan = cfg.arch == Arch::kLstm ? static_cast<double>(cfg.d) : static_cast<double>(t.cols);
    const double a = 1.0 / std::sqrt(fan);
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(-a, a);
  }
  return e;
}

const TensorDesc& Encoder::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  fail(ErrorKind::kNotFound, "encoder has no tensor '" + name + "'");
}

std::uint64_t Encoder::checksum() const {
  return fnv1a(theta_.data(), theta_.size() * sizeof(double));
}

// --- workspace ------------------------------------------------------------
//
// LSTM buffers hold S = T+1 rows per sample: row 0 is a zero "t = -1" row so
// that h_{t-1} and c_{t-1} are plain row offsets and the recurrent weight
// gradient is one gemm over the shifted buffers.

void Workspace::reserve(const ModelConfig& cfg, std::size_t B) {
  if (cfg == cfg_ && B <= cap_) {
    B_ = B;
    return;
  }
  cfg_ = cfg;
  cap_ = std::max(B, cap_);
  B_ = B;
  const std::size_t d = cfg.d, T = cfg.T();
  if (cfg.arch == Arch::kLstm) {
    const std::size_t R = cap_ * (T + 1);
    x_.assign(R * cfg.F, 0.0);
    p_.assign(R * d, 0.0);
    g_.assign(cfg.L, std::vector<double>(R * 4 * d, 0.0));
    c_.assign(cfg.L, std::vector<double>(R * d, 0.0));
    tc_.assign(cfg.L, std::vector<double>(R * d, 0.0));
    h_.assign(cfg.L, std::vector<double>(R * d, 0.0));
    dg_.assign(R * 4 * d, 0.0);
    dh_a_.assign(R * d, 0.0);
    dh_b_.assign(R * d, 0.0);
    dc_.assign(cap_ * d, 0.0);
  } else {
    x_.assign(cap_ * T * cfg.F, 0.0);
    g_.assign(1, std::vector<double>(cap_ * cfg.hidden, 0.0));
    dg_.assign(cap_ * cfg.hidden, 0.0);
  }
}

double* Workspace::input(std::size_t b) {
  const std::size_t T = cfg_.T(), F = cfg_.F;
  if (cfg_.arch == Arch::kLstm) return x_.data() + (b * (T + 1) + 1) * F;
  return x_.data() + b * T * F;
}

void Workspace::forward(const Encoder& enc, std::size_t B, double* R) {
  require(enc.config() == cfg_ && B <= cap_, ErrorKind::kShape,
          "workspace was not reserved for this encoder/batch");
  B_ = B;
  forward_count += B;
  g_invocations.fetch_add(B, std::memory_order_relaxed);
  if (cfg_.arch == Arch::kLstm)
    forward_lstm(enc, R);
  else
    forward_mlp(enc, R);
}

void Workspace::backward(const Encoder& enc, const double* dR, double* grad) {
  backward_count += B_;
  if (cfg_.arch == Arch::kLstm)
    backward_lstm(enc, dR, grad);
  else
    backward_mlp(enc, dR, grad);
}

namespace {

void add_bias_rows(double* y, std::size_t rows, std::size_t n, std::size_t ld, const double* b) {
  for (std::size_t r = 0; r < rows; ++r) std::copy(b, b + n, y + r * ld);
}

void colsum_into(const double* y, std::size_t rows, std::size_t n, double* out) {
  const auto& k = simd::kernels();
  for (std::size_t r = 0; r < rows; ++r) k.axpy(1.0, y + r * n, out, n);
}

}  // namespace

void Workspace::forward_lstm(const Encoder& enc, double* R) {
  const auto& k = simd::kernels();
  const std::size_t d = cfg_.d, F = cfg_.F, T = cfg_.T(), S = T + 1, B = B_;
  const std::size_t rows = B * S;
  // Keep the t = -1 rows zero (inputs may have been written by callers).
  for (std::size_t b = 0; b < B; ++b) std::fill_n(x_.data() + b * S * F, F, 0.0);

  const auto& tw = enc.tensor("enc/in_w");
  const auto& tb = enc.tensor("enc/in_b");
  add_bias_rows(p_.data(), rows, d, d, enc.data(tb));
  k.gemm_nt(rows, d, F, x_.data(), F, enc.data(tw), F, p_.data(), d);

  const double* in = p_.data();
  for (std::size_t l = 0; l < cfg_.L; ++l) {
    const std::string pre = "enc/lstm" + std::to_string(l);
    const double* wx = enc.data(enc.tensor(pre + "/w_x"));
    const double* wh = enc.data(enc.tensor(pre + "/w_h"));
    const double* bias = enc.data(enc.tensor(pre + "/b"));
    double* G = g_[l].data();
    double* C = c_[l].data();
    double* TC = tc_[l].data();
    double* H = h_[l].data();
    add_bias_rows(G, rows, 4 * d, 4 * d, bias);
    k.gemm_nt(rows, 4 * d, d, in, d, wx, d, G, 4 * d);
    for (std::size_t b = 0; b < B; ++b) {
      std::fill_n(C + b * S * d, d, 0.0);
      std::fill_n(H + b * S * d, d, 0.0);
    }
    for (std::size_t t = 1; t <= T; ++t) {
      k.gemm_nt(B, 4 * d, d, H + (t - 1) * d, S * d, wh, d, G + t * 4 * d, S * 4 * d);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t r = b * S + t;
        double* gr = G + r * 4 * d;
        k.sigmoid(gr, gr, 2 * d);
        k.tanh(gr + 2 * d, gr + 2 * d, d);
        k.sigmoid(gr + 3 * d, gr + 3 * d, d);
        const double* cp = C + (r - 1) * d;
        double* cr = C + r * d;
        for (std::size_t j = 0; j < d; ++j) cr[j] = gr[d + j] * cp[j] + gr[j] * gr[2 * d + j];
        k.tanh(cr, TC + r * d, d);
        double* hr = H + r * d;
        const double* tcr = TC + r * d;
        for (std::size_t j = 0; j < d; ++j) hr[j] = gr[3 * d + j] * tcr[j];
      }
    }
    in = H;
  }
  const double* top = h_[cfg_.L - 1].data();
  for (std::size_t b = 0; b < B; ++b) std::copy_n(top + (b * S + T) * d, d, R + b * d);
}

void Workspace::backward_lstm(const Encoder& enc, const double* dR, double* grad) {
  const auto& k = simd::kernels();
  const std::size_t d = cfg_.d, F = cfg_.F, T = cfg_.T(), S = T + 1, B = B_;
  const std::size_t rows = B * S;

  double* dH = dh_a_.data();
  double* dIn = dh_b_.data();
  std::fill_n(dH, rows * d, 0.0);
  for (std::size_t b = 0; b < B; ++b) std::copy_n(dR + b * d, d, dH + (b * S + T) * d);

  for (std::size_t l = cfg_.L; l-- > 0;) {
    const std::string pre = "enc/lstm" + std::to_string(l);
    const auto& twx = enc.tensor(pre + "/w_x");
    const auto& twh = enc.tensor(pre + "/w_h");
    const auto& tb = enc.tensor(pre + "/b");
    const double* wx = enc.data(twx);
    const double* wh = enc.data(twh);
    const double* G = g_[l].data();
    const double* C = c_[l].data();
    const double* TC = tc_[l].data();
    const double* H = h_[l].data();
    const double* in = l == 0 ? p_.data() : h_[l - 1].data();
    double* dG = dg_.data();
    std::fill_n(dG, rows * 4 * d, 0.0);
    std::fill_n(dc_.data(), B * d, 0.0);

    for (std::size_t t = T; t >= 1; --t) {
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t r = b * S + t;
        const double* gr = G + r * 4 * d;
        const double* tcr = TC + r * d;
        const double* cp = C + (r - 1) * d;
        const double* dh = dH + r * d;
        double* dc = dc_.data() + b * d;
        double* dgr = dG + r * 4 * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double i = gr[j], f = gr[d + j], g = gr[2 * d + j], o = gr[3 * d + j];
          const double tcj = tcr[j];
          const double dcj = dc[j] + dh[j] * o * (1.0 - tcj * tcj);
          const double dout = dh[j] * tcj;
          dgr[j] = dcj * g * i * (1.0 - i);
          dgr[d + j] = dcj * cp[j] * f * (1.0 - f);
          dgr[2 * d + j] = dcj * i * (1.0 - g * g);
          dgr[3 * d + j] = dout * o * (1.0 - o);
          dc[j] = dcj * f;
        }
      }
      k.gemm_nn(B, d, 4 * d, dG + t * 4 * d, S * 4 * d, wh, d, dH + (t - 1) * d, S * d);
    }
    k.gemm_tn(4 * d, d, rows - 1, dG + 4 * d, 4 * d, H, d, grad + twh.offset, d);
    k.gemm_tn(4 * d, d, rows, dG, 4 * d, in, d, grad + twx.offset, d);
    colsum_into(dG, rows, 4 * d, grad + tb.offset);
    std::fill_n(dIn, rows * d, 0.0);
    k.gemm_nn(rows, d, 4 * d, dG, 4 * d, wx, d, dIn, d);
    std::swap(dH, dIn);
  }
  // dH now holds dP; its t = -1 rows are zero because the dG rows were.
  const auto& tw = enc.tensor("enc/in_w");
  const auto& tb = enc.tensor("enc/in_b");
  k.gemm_tn(d, F, rows, dH, d, x_.data(), F, grad + tw.offset, F);
  colsum_into(dH, rows, d, grad + tb.offset);
}

void Workspace::forward_mlp(const Encoder& enc, double* R) {
  const auto& k = simd::kernels();
  const std::size_t B = B_, h = cfg_.hidden, d = cfg_.d, n_in = cfg_.T() * cfg_.F;
  double* A = g_[0].data();
  add_bias_rows(A, B, h, h, enc.data(enc.tensor("enc/mlp/b1")));
  k.gemm_nt(B, h, n_in, x_.data(), n_in, enc.data(enc.tensor("enc/mlp/w1")), n_in, A, h);
  k.tanh(A, A, B * h);
  add_bias_rows(R, B, d, d, enc.data(enc.tensor("enc/mlp/b2")));
  k.gemm_nt(B, d, h, A, h, enc.data(enc.tensor("enc/mlp/w2")), h, R, d);
}

void Workspace::backward_mlp(const Encoder& enc, const double* dR, double* grad) {
  const auto& k = simd::kernels();
  const std::size_t B = B_, h = cfg_.hidden, d = cfg_.d, n_in = cfg_.T() * cfg_.F;
  const double* A = g_[0].data();
  const auto& tw1 = enc.tensor("enc/mlp/w1");
  const auto& tb1 = enc.tensor("enc/mlp/b1");
  const auto& tw2 = enc.tensor("enc/mlp/w2");
  const auto& tb2 = enc.tensor("enc/mlp/b2");
  k.gemm_tn(d, h, B, dR, d, A, h, grad + tw2.offset, h);
  colsum_into(dR, B, d, grad + tb2.offset);
  double* dA = dg_.data();
  std::fill_n(dA, B * h, 0.0);
  k.gemm_nn(B, h, d, dR, d, enc.data(tw2), h, dA, h);
  for (std::size_t i = 0; i < B * h; ++i) dA[i] *= 1.0 - A[i] * A[i];
  k.gemm_tn(h, n_in, B, dA, h, x_.data(), n_in, grad + tw1.offset, n_in);
  colsum_into(dA, B, h, grad + tb1.offset);
}

std::vector<double> encode(const Encoder& enc, std::span<const double> window) {
  const auto& cfg = enc.config();
  require(window.size() == cfg.T() * cfg.F, ErrorKind::kShape,
          "window has " + std::to_string(window.size()) + " values, expected " +
              std::to_string(cfg.T() * cfg.F));
  Workspace ws;
  ws.reserve(cfg, 1);
  std::copy(window.begin(), window.end(), ws.input(0));
  std::vector<double> r(cfg.d);
  ws.forward(enc, 1, r.data());
  return r;
}

double predict_latency(std::span<const double> r, std::span<const double> m) {
  require(r.size() == m.size(), ErrorKind::kShape,
          "representation and embedding differ in dimension");
  return simd::dot(r, m);
}

}  // namespace perfvec::model
