// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flexvox/autodiff.hpp"
#include "flexvox/model.hpp"
#include "flexvox/physics.hpp"
#include "flexvox/tensor.hpp"

namespace flexvox {

// Probability floor used inside loss_ae so log terms stay finite.
inline constexpr float kLossProbEps = 1e-7f;

// ------------------------------------------------------------ configuration

struct TrainConfig {
  double alpha = 0.85;    // weighted-BCE weight on occupied voxels
  double beta = 0.8;      // reconstruction share of the generator objective
  double gp_lambda = 10.0;
  int64_t batch_size = 8;
  double lr_initial = 5e-4;
  double lr_after_epoch1 = 1e-4;  // applied from the second epoch onward
  int64_t epochs = 1;
  int64_t critic_steps_per_gen_step = 1;
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;  // throws std::invalid_argument
  double lr_for_epoch(int64_t epoch) const {
    return epoch == 0 ? lr_initial : lr_after_epoch1;
  }
};

// ------------------------------------------------------------------ logging

// One record per completed generator step, in emission order.
struct TrainLogRow {
  int64_t step = 0;   // 1-based generator step index
  int64_t epoch = 0;  // 0-based epoch the step belongs to
  double lr = 0.0;
  double l_ae = 0.0;
  double l_gan_g = 0.0;  // 0 when the critic is disabled (beta == 1)
  double l_gan_d = 0.0;
  double gp_term = 0.0;  // lambda-scaled penalty contribution
  double total = 0.0;
  double wall_ms = 0.0;  // timing diagnostic; excluded from determinism checks
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
};

// Line-delimited JSON, one row per line, fixed field order.
void save_train_log(const TrainLog& log, const std::string& path);
TrainLog load_train_log(const std::string& path);

// Field-by-field equality; wall_ms is compared only when ignore_wall_time is
// false (it is the one field that legitimately differs between reruns).
bool train_log_rows_match(const TrainLogRow& a, const TrainLogRow& b, bool ignore_wall_time);
bool train_log_matches(const TrainLog& a, const TrainLog& b, bool ignore_wall_time);

// ------------------------------------------------------------------- losses

// Mean over every element of
//   -alpha * t * log(o) - (1 - alpha) * (1 - t) * log(1 - o),
// with both probabilities floored at kLossProbEps. Shapes must match.
autodiff::Var loss_ae(const autodiff::Var& output, const autodiff::Var& target, double alpha);

// beta * l_ae + (1 - beta) * l_gan_g, as an exact affine combination.
autodiff::Var loss_total(const autodiff::Var& l_ae, const autodiff::Var& l_gan_g, double beta);

// Per-sample mix coeff_a[s] * a + coeff_b[s] * b, accumulated in double so the
// result is bitwise symmetric under swapping (a, coeff_a) with (b, coeff_b).
// Callers pass coeff_b[s] = 1 - coeff_a[s] for gradient-penalty interpolation.
Tensor interpolate_samples(const Tensor& a, const Tensor& b, const std::vector<float>& coeff_a,
                           const std::vector<float>& coeff_b);

// mean over the batch of (||d score_s / d x_hat_s||_2 - 1)^2, built as tape
// ops so it can be differentiated again for the critic update. `scores` must
// be [B] and reachable from `x_hat`, and x_hat must require gradients.
autodiff::Var gradient_norm_penalty(autodiff::Tape& tape, const autodiff::Var& scores,
                                    const autodiff::Var& x_hat);

struct GanLosses {
  autodiff::Var d_loss;  // mean(fake) - mean(real) + gp_lambda * gp
  autodiff::Var g_loss;  // -mean(fake)
  autodiff::Var gp;      // unscaled penalty mean
};

// Critic scores on real/fake batches plus scores on the interpolated
// gradient-penalty samples x_hat (all [B]; x_hat is the interpolated grid the
// gp scores were computed from).
GanLosses loss_gan(autodiff::Tape& tape, const autodiff::Var& real_scores,
                   const autodiff::Var& fake_scores, const autodiff::Var& gp_scores,
                   const autodiff::Var& x_hat, double gp_lambda);

// ---------------------------------------------------------------- optimizer

struct AdamState {
  int64_t t = 0;
  std::vector<Tensor> m;  // first moments, aligned with the parameter list
  std::vector<Tensor> v;  // second moments
};

AdamState make_adam_state(const std::vector<NamedTensor>& params);

// One bias-corrected Adam update; scalar arithmetic in double for stable,
// platform-independent results.
void adam_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps);

// ------------------------------------------------------------ training loop

struct TrainResult {
  Checkpoint checkpoint;  // parameters (and optimizer moments) at the last good step
  TrainLog log;
  bool aborted = false;
  std::string abort_reason;
  Generator generator;        // final (or last good) models, ready for inference
  Discriminator discriminator;
};

// Alternating critic/generator updates with per-epoch reshuffling (partial
// batches dropped), the two-stage learning-rate schedule, and per-sample
// uniform interpolation draws; fully deterministic for a fixed config. A
// non-finite loss or gradient aborts before the offending update is applied,
// so the returned parameters are the last good ones.
TrainResult train(const Dataset& data, const GeneratorSpec& gen_spec,
                  const DiscriminatorSpec& disc_spec, const TrainConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_step = {});

}  // namespace flexvox
