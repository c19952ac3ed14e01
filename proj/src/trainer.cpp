// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "flexvox/condition.hpp"
#include "flexvox/prng.hpp"

namespace flexvox {

namespace ad = autodiff;

// ------------------------------------------------------------ configuration

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("TrainConfig: alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("TrainConfig: beta must lie in [0, 1]");
  if (!(gp_lambda >= 0.0) || !std::isfinite(gp_lambda))
    throw std::invalid_argument("TrainConfig: gp_lambda must be finite and non-negative");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
  if (!(lr_initial > 0.0) || !(lr_after_epoch1 > 0.0))
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be at least 1");
  if (critic_steps_per_gen_step < 1)
    throw std::invalid_argument("TrainConfig: critic_steps_per_gen_step must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be positive");
}

// ------------------------------------------------------------------ logging

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_train_log: cannot open " + path);
  for (const TrainLogRow& r : log.rows) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["l_ae"] = r.l_ae;
    j["l_gan_g"] = r.l_gan_g;
    j["l_gan_d"] = r.l_gan_d;
    j["gp_term"] = r.gp_term;
    j["total"] = r.total;
    j["wall_ms"] = r.wall_ms;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_train_log: write failed for " + path);
}

TrainLog load_train_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_train_log: cannot open " + path);
  TrainLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TrainLogRow r;
    r.step = j.at("step").get<int64_t>();
    r.epoch = j.at("epoch").get<int64_t>();
    r.lr = j.at("lr").get<double>();
    r.l_ae = j.at("l_ae").get<double>();
    r.l_gan_g = j.at("l_gan_g").get<double>();
    r.l_gan_d = j.at("l_gan_d").get<double>();
    r.gp_term = j.at("gp_term").get<double>();
    r.total = j.at("total").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    log.rows.push_back(r);
  }
  return log;
}

bool train_log_rows_match(const TrainLogRow& a, const TrainLogRow& b, bool ignore_wall_time) {
  if (a.step != b.step || a.epoch != b.epoch) return false;
  if (a.lr != b.lr || a.l_ae != b.l_ae || a.l_gan_g != b.l_gan_g) return false;
  if (a.l_gan_d != b.l_gan_d || a.gp_term != b.gp_term || a.total != b.total) return false;
  if (!ignore_wall_time && a.wall_ms != b.wall_ms) return false;
  return true;
}

bool train_log_matches(const TrainLog& a, const TrainLog& b, bool ignore_wall_time) {
  if (a.rows.size() != b.rows.size()) return false;
  for (size_t i = 0; i < a.rows.size(); ++i)
    if (!train_log_rows_match(a.rows[i], b.rows[i], ignore_wall_time)) return false;
  return true;
}

// ------------------------------------------------------------------- losses

ad::Var loss_ae(const ad::Var& output, const ad::Var& target, double alpha) {
  if (!output.valid() || !target.valid())
    throw std::invalid_argument("loss_ae: operands must be tape nodes");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("loss_ae: alpha must lie in [0, 1]");
  if (output.value().shape() != target.value().shape())
    throw std::invalid_argument("loss_ae: output shape " + output.value().shape_str() +
                                " does not match target shape " + target.value().shape_str());
  const float a = static_cast<float>(alpha);
  ad::Var o_floor = ad::clamp_min(output, kLossProbEps);
  ad::Var one_minus_o = ad::add_scalar(ad::mul_scalar(output, -1.0f), 1.0f);
  ad::Var om_floor = ad::clamp_min(one_minus_o, kLossProbEps);
  ad::Var one_minus_t = ad::add_scalar(ad::mul_scalar(target, -1.0f), 1.0f);
  ad::Var missed = ad::mul_scalar(ad::mul(target, ad::log(o_floor)), -a);
  ad::Var spurious = ad::mul_scalar(ad::mul(one_minus_t, ad::log(om_floor)), -(1.0f - a));
  return ad::mean_all(ad::add(missed, spurious));
}

ad::Var loss_total(const ad::Var& l_ae, const ad::Var& l_gan_g, double beta) {
  if (!l_ae.valid() || !l_gan_g.valid())
    throw std::invalid_argument("loss_total: operands must be tape nodes");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("loss_total: beta must lie in [0, 1]");
  return ad::add(ad::mul_scalar(l_ae, static_cast<float>(beta)),
                 ad::mul_scalar(l_gan_g, static_cast<float>(1.0 - beta)));
}

Tensor interpolate_samples(const Tensor& a, const Tensor& b, const std::vector<float>& coeff_a,
                           const std::vector<float>& coeff_b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("interpolate_samples: operand shapes differ");
  if (a.rank() < 1) throw std::invalid_argument("interpolate_samples: operands must be batched");
  const int64_t batch = a.dim(0);
  if (static_cast<int64_t>(coeff_a.size()) != batch ||
      static_cast<int64_t>(coeff_b.size()) != batch)
    throw std::invalid_argument("interpolate_samples: coefficient count does not match the batch");
  Tensor out(a.shape());
  const int64_t per = a.numel() / batch;
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int64_t s = 0; s < batch; ++s) {
    // f32*f32 products are exact in double, so the sum below does not depend
    // on operand order or FMA contraction.
    const double ca = coeff_a[s];
    const double cb = coeff_b[s];
    const int64_t base = s * per;
    for (int64_t i = 0; i < per; ++i)
      po[base + i] = static_cast<float>(ca * pa[base + i] + cb * pb[base + i]);
  }
  return out;
}

ad::Var gradient_norm_penalty(ad::Tape& tape, const ad::Var& scores, const ad::Var& x_hat) {
  if (!scores.valid() || !x_hat.valid())
    throw std::invalid_argument("gradient_norm_penalty: operands must be tape nodes");
  if (scores.value().rank() != 1)
    throw std::invalid_argument("gradient_norm_penalty: scores must have shape [batch]");
  if (x_hat.value().rank() < 1 || x_hat.value().dim(0) != scores.value().dim(0))
    throw std::invalid_argument("gradient_norm_penalty: x_hat batch does not match scores");
  if (!x_hat.requires_grad())
    throw std::invalid_argument("gradient_norm_penalty: x_hat must require gradients");
  ad::Var total = ad::sum_all(scores);
  ad::Var g = tape.grad(total, {x_hat})[0];
  ad::Var norm = ad::sqrt_safe(ad::per_sample_sum(ad::square(g)));
  return ad::mean_all(ad::square(ad::add_scalar(norm, -1.0f)));
}

GanLosses loss_gan(ad::Tape& tape, const ad::Var& real_scores, const ad::Var& fake_scores,
                   const ad::Var& gp_scores, const ad::Var& x_hat, double gp_lambda) {
  if (!real_scores.valid() || !fake_scores.valid())
    throw std::invalid_argument("loss_gan: score operands must be tape nodes");
  if (real_scores.value().shape() != fake_scores.value().shape())
    throw std::invalid_argument("loss_gan: real/fake score shapes differ");
  if (!(gp_lambda >= 0.0) || !std::isfinite(gp_lambda))
    throw std::invalid_argument("loss_gan: gp_lambda must be finite and non-negative");
  GanLosses out{{}, {}, {}};
  out.gp = gradient_norm_penalty(tape, gp_scores, x_hat);
  ad::Var gap = ad::sub(ad::mean_all(fake_scores), ad::mean_all(real_scores));
  out.d_loss = ad::add(gap, ad::mul_scalar(out.gp, static_cast<float>(gp_lambda)));
  out.g_loss = ad::mul_scalar(ad::mean_all(fake_scores), -1.0f);
  return out;
}

// ---------------------------------------------------------------- optimizer

AdamState make_adam_state(const std::vector<NamedTensor>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const NamedTensor& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adam_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (grads.size() != params.size())
    throw std::invalid_argument("adam_step: gradient count does not match the parameter count");
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state does not match the parameter count");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& pt = params[i].value;
    const Tensor& gt = grads[i];
    if (!pt.same_shape(gt))
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + params[i].name);
    float* p = pt.data();
    const float* g = gt.data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const int64_t count = pt.numel();
    for (int64_t e = 0; e < count; ++e) {
      const double ge = g[e];
      const double me = beta1 * m[e] + (1.0 - beta1) * ge;
      const double ve = beta2 * v[e] + (1.0 - beta2) * ge * ge;
      m[e] = static_cast<float>(me);
      v[e] = static_cast<float>(ve);
      p[e] = static_cast<float>(p[e] - lr * (me / bc1) / (std::sqrt(ve / bc2) + eps));
    }
  }
}

// ------------------------------------------------------------ training loop

namespace {

bool tensor_finite(const Tensor& t) {
  const float* d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(d[i])) return false;
  return true;
}

bool grads_finite(const std::vector<ad::Var>& grads) {
  for (const ad::Var& g : grads)
    if (!tensor_finite(g.value())) return false;
  return true;
}

struct BatchTensors {
  Tensor input;   // [B, 1, n, n, n]
  Tensor target;  // [B, 1, n, n, n]
  Tensor cond;    // [B, 11]
  Tensor masks;   // [B, 11, s, s, s]
};

BatchTensors gather_batch(const Dataset& data, const std::vector<int64_t>& order, int64_t first,
                          int64_t batch, int64_t mask_s) {
  const int64_t n = data.n;
  const int64_t vol = n * n * n;
  BatchTensors b;
  b.input = Tensor({batch, 1, n, n, n});
  b.target = Tensor({batch, 1, n, n, n});
  b.cond = Tensor({batch, static_cast<int64_t>(kConditionLength)});
  b.masks = Tensor({batch, static_cast<int64_t>(kConditionLength), mask_s, mask_s, mask_s});
  const int64_t mask_vol = kConditionLength * mask_s * mask_s * mask_s;
  for (int64_t s = 0; s < batch; ++s) {
    const DatasetEntry& e = data.entries[static_cast<size_t>(order[static_cast<size_t>(first + s)])];
    if (static_cast<int64_t>(e.input.size()) != vol ||
        static_cast<int64_t>(e.target.size()) != vol)
      throw std::invalid_argument("train: dataset entry grid size does not match the header");
    float* in = b.input.data() + s * vol;
    float* tg = b.target.data() + s * vol;
    for (int64_t i = 0; i < vol; ++i) {
      in[i] = e.input[static_cast<size_t>(i)] ? 1.0f : 0.0f;
      tg[i] = e.target[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    }
    const std::vector<float> cv = encode_vector(e.condition);
    std::memcpy(b.cond.data() + s * kConditionLength, cv.data(), sizeof(float) * cv.size());
    const Tensor mk = encode_block_masks(e.condition, mask_s);
    std::memcpy(b.masks.data() + s * mask_vol, mk.data(), sizeof(float) * mask_vol);
  }
  return b;
}

std::vector<ad::Var> bound_vars(const BoundParams& bound) {
  std::vector<ad::Var> vars;
  vars.reserve(bound.vars.size());
  for (const auto& nv : bound.vars) vars.push_back(nv.second);
  return vars;
}

std::vector<Tensor> grad_values(const std::vector<ad::Var>& grads) {
  std::vector<Tensor> out;
  out.reserve(grads.size());
  for (const ad::Var& g : grads) out.push_back(g.value());
  return out;
}

void put_opt_blocks(Checkpoint& ck, const std::string& prefix, const AdamState& state,
                    const std::vector<NamedTensor>& params) {
  std::vector<NamedTensor> blocks;
  Tensor t({1});
  t.data()[0] = static_cast<float>(state.t);
  blocks.push_back({"t", t});
  for (size_t i = 0; i < params.size(); ++i) {
    blocks.push_back({params[i].name + ".m", state.m[i]});
    blocks.push_back({params[i].name + ".v", state.v[i]});
  }
  put_blocks(ck, prefix, blocks);
}

}  // namespace

TrainResult train(const Dataset& data, const GeneratorSpec& gen_spec,
                  const DiscriminatorSpec& disc_spec, const TrainConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_step) {
  config.validate();
  gen_spec.validate();
  disc_spec.validate();
  if (data.entries.empty()) throw std::invalid_argument("train: dataset is empty");
  if (data.n != gen_spec.n)
    throw std::invalid_argument("train: dataset resolution does not match the generator spec");
  if (data.n != disc_spec.n)
    throw std::invalid_argument("train: dataset resolution does not match the discriminator spec");
  if (static_cast<int64_t>(data.entries.size()) < config.batch_size)
    throw std::invalid_argument("train: dataset holds fewer samples than one batch");

  TrainResult result;
  Generator gen = make_generator(gen_spec, config.seed);
  Discriminator disc = make_discriminator(disc_spec, config.seed);
  AdamState opt_g = make_adam_state(gen.params);
  AdamState opt_d = make_adam_state(disc.params);
  Prng eps_rng(mix_seed(config.seed, fnv1a64("gp-epsilon", 10)));
  const bool use_gan = config.beta < 1.0;
  const int64_t mask_s = disc_spec.mask_spatial();
  int64_t gstep = 0;
  int64_t done_epochs = 0;

  auto abort_run = [&](std::string why) {
    result.aborted = true;
    result.abort_reason = std::move(why);
  };

  for (int64_t epoch = 0; epoch < config.epochs && !result.aborted; ++epoch) {
    const double lr = config.lr_for_epoch(epoch);
    std::vector<int64_t> order(data.entries.size());
    std::iota(order.begin(), order.end(), 0);
    Prng shuffle_rng(mix_seed(config.seed, fnv1a64("train-shuffle", 13), static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);
    const int64_t steps = static_cast<int64_t>(order.size()) / config.batch_size;

    for (int64_t bi = 0; bi < steps && !result.aborted; ++bi) {
      const auto t0 = std::chrono::steady_clock::now();
      BatchTensors batch = gather_batch(data, order, bi * config.batch_size, config.batch_size, mask_s);
      double l_gan_d = 0.0;
      double gp_term = 0.0;
      double l_gan_g = 0.0;

      if (use_gan) {
        // The generator's proposal for this batch; evaluated once and reused
        // across the critic sub-steps (the generator only changes below).
        Tensor fake_value;
        {
          ad::Tape tape;
          BoundParams pg = bind_params(tape, gen.params, false);
          ad::Var in = tape.leaf(batch.input);
          ad::Var cv = tape.leaf(batch.cond);
          fake_value = generator_forward(tape, gen_spec, pg, in, cv).value();
        }
        for (int64_t cs = 0; cs < config.critic_steps_per_gen_step && !result.aborted; ++cs) {
          std::vector<float> ca(static_cast<size_t>(config.batch_size));
          std::vector<float> cb(static_cast<size_t>(config.batch_size));
          for (int64_t s = 0; s < config.batch_size; ++s) {
            ca[static_cast<size_t>(s)] = static_cast<float>(eps_rng.uniform());
            cb[static_cast<size_t>(s)] = 1.0f - ca[static_cast<size_t>(s)];
          }
          Tensor xh_value = interpolate_samples(batch.target, fake_value, ca, cb);
          ad::Tape tape;
          BoundParams pd = bind_params(tape, disc.params, true);
          ad::Var real = tape.leaf(batch.target);
          ad::Var fake = tape.leaf(fake_value);
          ad::Var masks = tape.leaf(batch.masks);
          ad::Var xh = tape.leaf(std::move(xh_value), /*requires_grad=*/true);
          ad::Var rs = discriminator_forward(tape, disc_spec, pd, real, masks);
          ad::Var fs = discriminator_forward(tape, disc_spec, pd, fake, masks);
          ad::Var hs = discriminator_forward(tape, disc_spec, pd, xh, masks);
          GanLosses gl = loss_gan(tape, rs, fs, hs, xh, config.gp_lambda);
          l_gan_d = static_cast<double>(gl.d_loss.value().data()[0]);
          gp_term = config.gp_lambda * static_cast<double>(gl.gp.value().data()[0]);
          if (!std::isfinite(l_gan_d)) {
            abort_run("critic loss is not finite at step " + std::to_string(gstep + 1));
            break;
          }
          std::vector<ad::Var> gvars = tape.grad(gl.d_loss, bound_vars(pd));
          if (!grads_finite(gvars)) {
            abort_run("critic gradient is not finite at step " + std::to_string(gstep + 1));
            break;
          }
          adam_step(disc.params, grad_values(gvars), opt_d, lr, config.adam_beta1,
                    config.adam_beta2, config.adam_eps);
        }
        if (result.aborted) break;
      }

      {
        ad::Tape tape;
        BoundParams pg = bind_params(tape, gen.params, true);
        ad::Var in = tape.leaf(batch.input);
        ad::Var cv = tape.leaf(batch.cond);
        ad::Var tgt = tape.leaf(batch.target);
        ad::Var out = generator_forward(tape, gen_spec, pg, in, cv);
        ad::Var l_ae_node = loss_ae(out, tgt, config.alpha);
        ad::Var total_node = l_ae_node;
        if (use_gan) {
          BoundParams pd = bind_params(tape, disc.params, false);
          ad::Var masks = tape.leaf(batch.masks);
          ad::Var fs = discriminator_forward(tape, disc_spec, pd, out, masks);
          ad::Var lg = ad::mul_scalar(ad::mean_all(fs), -1.0f);
          l_gan_g = static_cast<double>(lg.value().data()[0]);
          total_node = loss_total(l_ae_node, lg, config.beta);
        }
        const double l_ae_host = static_cast<double>(l_ae_node.value().data()[0]);
        const double total_host = static_cast<double>(total_node.value().data()[0]);
        if (!std::isfinite(l_ae_host) || !std::isfinite(l_gan_g) || !std::isfinite(total_host)) {
          abort_run("generator loss is not finite at step " + std::to_string(gstep + 1));
          break;
        }
        std::vector<ad::Var> gvars = tape.grad(total_node, bound_vars(pg));
        if (!grads_finite(gvars)) {
          abort_run("generator gradient is not finite at step " + std::to_string(gstep + 1));
          break;
        }
        adam_step(gen.params, grad_values(gvars), opt_g, lr, config.adam_beta1, config.adam_beta2,
                  config.adam_eps);

        ++gstep;
        TrainLogRow row;
        row.step = gstep;
        row.epoch = epoch;
        row.lr = lr;
        row.l_ae = l_ae_host;
        row.l_gan_g = l_gan_g;
        row.l_gan_d = l_gan_d;
        row.gp_term = gp_term;
        row.total = total_host;
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                          .count();
        result.log.rows.push_back(row);
        if (on_step) on_step(row);
      }
    }
    if (!result.aborted) done_epochs = epoch + 1;
  }

  result.checkpoint.generator_hash = gen_spec.hash();
  result.checkpoint.discriminator_hash = disc_spec.hash();
  result.checkpoint.epoch = static_cast<uint32_t>(done_epochs);
  result.checkpoint.step = static_cast<uint64_t>(gstep);
  result.checkpoint.seed = config.seed;
  put_blocks(result.checkpoint, "g.", gen.params);
  put_blocks(result.checkpoint, "d.", disc.params);
  put_opt_blocks(result.checkpoint, "opt.g.", opt_g, gen.params);
  put_opt_blocks(result.checkpoint, "opt.d.", opt_d, disc.params);
  result.generator = std::move(gen);
  result.discriminator = std::move(disc);
  return result;
}

}  // namespace flexvox
