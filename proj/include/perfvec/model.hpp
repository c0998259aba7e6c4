// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perfvec/features.hpp"
#include "perfvec/store.hpp"

namespace perfvec::model {

enum class Arch { kLstm, kMlp };

std::string_view arch_name(Arch a);
Arch parse_arch(std::string_view name);

struct ModelConfig {
  Arch arch = Arch::kLstm;
  std::size_t F = features::kNumFeatures;
  std::size_t c = 31;  // context: the window holds c+1 rows
  std::size_t d = 32;
  std::size_t L = 2;
  std::size_t hidden = 128;  // flat MLP only

  std::size_t T() const { return c + 1; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorDesc {
  std::string name;
  std::size_t rows = 0, cols = 0, offset = 0;
  std::size_t size() const { return rows * cols; }
};

// Encoder parameters live in one flat vector; `tensors()` names the slices.
//
// LSTM: x_t (F) -> p_t = W_in x_t + b_in (d), then L layers of
//   [i f g o] = W_x in_t + W_h h_{t-1} + b  (gate blocks of d rows each)
//   c_t = sigmoid(f) * c_{t-1} + sigmoid(i) * tanh(g)
//   h_t = sigmoid(o) * tanh(c_t)
// with h_{-1} = c_{-1} = 0. The representation is h_T of the last layer.
//
// MLP: R = W2 tanh(W1 x + b1) + b2 over the flattened (c+1)*F window.
class Encoder {
 public:
  Encoder() = default;

  // Weights uniform in +-1/sqrt(fan), LSTM forget-gate bias 1, other biases 0.
  static Encoder create(const ModelConfig& cfg, std::uint64_t seed);
  static Encoder zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::span<double> params() { return theta_; }
  std::span<const double> params() const { return theta_; }
  std::size_t num_params() const { return theta_.size(); }
  const std::vector<TensorDesc>& tensors() const { return tensors_; }
  const TensorDesc& tensor(const std::string& name) const;
  const double* data(const TensorDesc& t) const { return theta_.data() + t.offset; }

  std::uint64_t checksum() const;

  friend bool operator==(const Encoder& a, const Encoder& b) {
    return a.cfg_ == b.cfg_ && a.theta_ == b.theta_;
  }

 private:
  explicit Encoder(const ModelConfig& cfg);

  ModelConfig cfg_;
  std::vector<double> theta_;
  std::vector<TensorDesc> tensors_;
};

// Scratch buffers for batched forward/backward. backward() uses the
// activations of the most recent forward(); the counters count samples.
class Workspace {
 public:
  // Pointer to the (c+1) x F input block of sample b; fill before forward().
  double* input(std::size_t b);

  void reserve(const ModelConfig& cfg, std::size_t B);
  void forward(const Encoder& enc, std::size_t B, double* R);
  // grad (size num_params) is accumulated into.
  void backward(const Encoder& enc, const double* dR, double* grad);

  std::uint64_t forward_count = 0;
  std::uint64_t backward_count = 0;

 private:
  void forward_lstm(const Encoder& enc, double* R);
  void forward_mlp(const Encoder& enc, double* R);
  void backward_lstm(const Encoder& enc, const double* dR, double* grad);
  void backward_mlp(const Encoder& enc, const double* dR, double* grad);

  ModelConfig cfg_;
  std::size_t B_ = 0, cap_ = 0;
  std::vector<double> x_;
  std::vector<double> p_;
  std::vector<std::vector<double>> g_, c_, tc_, h_;
  std::vector<double> dg_, dh_a_, dh_b_, dc_;
};

// Samples encoded by any Workspace in this process.
std::uint64_t encoder_invocations();

// Single-window convenience wrapper: window is (c+1) x F, oldest row first.
std::vector<double> encode(const Encoder& enc, std::span<const double> window);

// Bias-free linear predictor: r . m.
double predict_latency(std::span<const double> r, std::span<const double> m);

// One row of d values per config.
struct UarchTable {
  std::size_t d = 0;
  std::vector<std::string> ids;
  std::vector<double> rows;

  std::size_t k() const { return ids.size(); }
  std::span<const double> row(std::size_t j) const { return {rows.data() + j * d, d}; }
  std::span<double> row(std::size_t j) { return {rows.data() + j * d, d}; }
  std::size_t index(const std::string& id) const;
  std::span<const double> row(const std::string& id) const { return row(index(id)); }
  void add(const std::string& id, std::span<const double> m);

  friend bool operator==(const UarchTable&, const UarchTable&) = default;
};

struct Gradients {
  std::vector<double> enc;    // num_params
  std::vector<double> table;  // k x d
};

// loss = mean over the B samples and K configs of (R_b . M_j - t_bj)^2.
// The encoder runs once forward and once backward per sample; its input
// gradient dR_b = 2/(BK) * sum_j e_bj M_j carries all K errors at once.
// Inputs must already be written to ws.input(b). Gradients are overwritten.
double loss_and_grads(const Encoder& enc, const UarchTable& table, std::size_t B,
                      const double* targets, Workspace& ws, Gradients& g);

struct GradCheckOptions {
  double epsilon = 1e-3;
  std::size_t samples = 256;  // parameters probed (encoder + table)
  std::uint64_t seed = 0;
  std::function<void(Gradients&)> mutate;  // applied to the analytic gradients
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // tensor name of the worst entry
};

// Fourth-order central differences on a random parameter subset. Every
// encoder tensor and the table get at least one probe. Relative error is
// |a - n| / max(|a|, |n|, 1e-6); the floor keeps f64 roundoff in the
// difference quotient from dominating near-zero gradients.
GradCheckResult grad_check(Encoder enc, UarchTable table, std::span<const double> windows,
                           std::span<const double> targets, std::size_t B,
                           const GradCheckOptions& opt = {});

class Adam {
 public:
  Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grads, double lr);
  std::uint64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double lr0 = 1e-3;
  double lr_decay = 0.1;
  std::size_t decay_every = 10;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t samples_per_epoch = 0;  // 0 = every training index each epoch
  std::size_t val_samples = 0;        // 0 = the whole validation split
  features::FeatureMask mask;
  // Divide each config's targets by its mean training target while
  // optimizing; the returned table is rescaled back to 0.1 ns units.
  bool normalize = true;
  // Rename architectural registers by a random permutation per training
  // window. Dependencies, and so timing, are unchanged.
  bool augment_registers = true;
  // Fine-tuning only: L2 penalty on table rows, relative to the mean
  // eigenvalue of R^T R / n. Shrinks rows fit from few programs.
  double ridge = 0.0;
  std::function<void(const struct EpochLog&)> on_epoch;
};

double lr_at(const TrainConfig& tc, std::size_t epoch);

// Defaults for fitting table rows against a frozen encoder: the problem is a
// convex least-squares fit, so a larger step and slower decay pay off.
TrainConfig finetune_defaults();

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // normalized units when tc.normalize
  double val_loss = 0.0;
  std::uint64_t forward_calls = 0;
  std::uint64_t backward_calls = 0;
  double seconds = 0.0;
};

struct TrainResult {
  Encoder encoder;
  UarchTable table;  // 0.1 ns units
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::vector<double> scales;
};

TrainResult train_foundation(const store::Dataset& ds, const store::Split& split,
                             const ModelConfig& mc, const TrainConfig& tc);

// Fits table rows for every config column of `tuning` with the encoder
// frozen: representations are computed once, then Adam runs on the rows.
struct FinetuneResult {
  UarchTable table;
  std::vector<EpochLog> log;
  double final_loss = 0.0;  // 0.1 ns units squared, over the tuning indices
};

FinetuneResult finetune_uarch(const Encoder& frozen, const store::Dataset& tuning,
                              std::span<const std::size_t> indices, const TrainConfig& tc);

// Representations for selected dataset indices (n x d, row-major).
std::vector<double> dataset_representations(const Encoder& enc, const store::Dataset& ds,
                                            std::span<const std::size_t> indices,
                                            const features::FeatureMask& mask,
                                            std::uint64_t* forward_calls = nullptr);

// Streams R_i for every instruction of a trace in program order, in chunks.
using ReprSink = std::function<void(std::size_t first, std::size_t count, const double* R)>;
void encode_trace(const Encoder& enc, const features::FeatureMatrix& fm,
                  const features::FeatureMask& mask, const ReprSink& sink, unsigned jobs = 1,
                  std::uint64_t* forward_calls = nullptr);

// Mean squared error of R . M_j against column j targets.
double table_loss(std::span<const double> R, std::size_t d, std::span<const double> targets,
                  std::size_t K, std::size_t j, std::span<const double> m);

// --- checkpoint glue ------------------------------------------------------

store::Checkpoint to_checkpoint(const Encoder& enc, const UarchTable& table,
                                const features::FeatureMask& mask,
                                const std::string& extra_json = "{}");
Encoder encoder_from(const store::Checkpoint& ck);
UarchTable table_from(const store::Checkpoint& ck);
features::FeatureMask mask_from(const store::Checkpoint& ck);
// Replaces every uarch/ entry and the table id list.
void set_table(store::Checkpoint& ck, const UarchTable& table);

}  // namespace perfvec::model
