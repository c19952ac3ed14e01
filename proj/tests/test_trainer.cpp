// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexvox/condition.hpp"
#include "flexvox/model.hpp"
#include "flexvox/prng.hpp"
#include "flexvox/trainer.hpp"

using namespace flexvox;
using autodiff::Tape;
using autodiff::Var;

namespace {

// Small model specs so the loop tests stay fast; shapes follow the same
// construction rules as the full-size defaults.
GeneratorSpec slim_gen() {
  GeneratorSpec g;
  g.n = 16;
  g.encoder_channels = {8, 16, 32};
  g.latent_dim = 16;
  g.fc_hidden = 32;
  return g;
}

DiscriminatorSpec slim_disc() {
  DiscriminatorSpec d;
  d.n = 16;
  d.channels = {8, 16, 1};
  return d;
}

// Flat-slab inputs whose targets dip by one layer over a condition-dependent
// x-range: a deterministic input/condition -> target mapping the generator
// can actually learn.
Dataset toy_dataset(int64_t n, int64_t count) {
  Dataset d;
  d.n = n;
  d.pitch = 0.022;
  const int64_t layer = n - 3;
  const auto at = [n](int64_t i, int64_t j, int64_t k) { return (k * n + j) * n + i; };
  for (int64_t c = 0; c < count; ++c) {
    DatasetEntry e;
    e.condition.force_bin = static_cast<int>(c % 2);
    e.condition.location_bin = static_cast<int>(c % 7);
    e.condition.material_bin = static_cast<int>((c / 7) % 2);
    e.input.assign(static_cast<size_t>(n * n * n), 0);
    e.target.assign(static_cast<size_t>(n * n * n), 0);
    const int64_t lo = 2 + (c % 4) * 2;
    const int64_t hi = lo + n / 4;
    for (int64_t j = 0; j < n; ++j) {
      for (int64_t i = 0; i < n; ++i) {
        e.input[static_cast<size_t>(at(i, j, layer))] = 1;
        const int64_t k = (i >= lo && i < hi) ? layer + 1 : layer;
        e.target[static_cast<size_t>(at(i, j, k))] = 1;
      }
    }
    d.entries.push_back(std::move(e));
  }
  return d;
}

Tensor random_probs(const std::vector<int64_t>& shape, uint64_t seed, double lo, double hi) {
  Tensor t(shape);
  Prng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

Tensor random_binary(const std::vector<int64_t>& shape, uint64_t seed) {
  Tensor t(shape);
  Prng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.below(2) ? 1.0f : 0.0f;
  return t;
}

double loss_ae_ref(const std::vector<double>& o, const std::vector<double>& t, double alpha) {
  double acc = 0.0;
  for (size_t i = 0; i < o.size(); ++i) {
    const double oc = std::max(o[i], 1e-7);
    const double omc = std::max(1.0 - o[i], 1e-7);
    acc += -alpha * t[i] * std::log(oc) - (1.0 - alpha) * (1.0 - t[i]) * std::log(omc);
  }
  return acc / static_cast<double>(o.size());
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

bool params_equal(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !tensors_equal(a[i].value, b[i].value)) return false;
  return true;
}

bool all_finite(const std::vector<NamedTensor>& params) {
  for (const NamedTensor& p : params)
    for (int64_t i = 0; i < p.value.numel(); ++i)
      if (!std::isfinite(p.value.data()[i])) return false;
  return true;
}

}  // namespace

// ----------------------------------------------------------------- loss_ae

TEST_CASE("loss_ae: perfect prediction gives exactly zero") {
  Tape tape;
  Tensor t({1, 1, 2, 2, 2});
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = (i % 2) ? 1.0f : 0.0f;
  Var target = tape.leaf(t);
  Var output = tape.leaf(t);
  Var l = loss_ae(output, target, 0.85);
  CHECK(l.value().data()[0] == 0.0f);
}

TEST_CASE("loss_ae: alpha=0.5, t=1, o=0.5 evaluates to 0.5*ln 2") {
  Tape tape;
  Tensor o({1, 1, 2, 2, 2}, 0.5f);
  Tensor t({1, 1, 2, 2, 2}, 1.0f);
  Var l = loss_ae(tape.leaf(o), tape.leaf(t), 0.5);
  CHECK(std::abs(static_cast<double>(l.value().data()[0]) - 0.34657) <= 1e-5);
}

TEST_CASE("loss_ae: alpha=1 ignores unoccupied voxels entirely") {
  Tape tape;
  Tensor o = random_probs({1, 1, 3, 3, 3}, 11, 0.01, 0.99);
  Tensor t({1, 1, 3, 3, 3}, 0.0f);
  Var l = loss_ae(tape.leaf(o), tape.leaf(t), 1.0);
  CHECK(l.value().data()[0] == 0.0f);
}

TEST_CASE("loss_ae: non-negative on random inputs, positive on mismatch") {
  Tape tape;
  Tensor o = random_probs({2, 1, 4, 4, 4}, 5, 0.02, 0.98);
  Tensor t = random_binary({2, 1, 4, 4, 4}, 6);
  Var l = loss_ae(tape.leaf(o), tape.leaf(t), 0.85);
  CHECK(l.value().data()[0] > 0.0f);
}

TEST_CASE("loss_ae: rejects bad arguments") {
  Tape tape;
  Tensor o({1, 1, 2, 2, 2}, 0.5f);
  Tensor t({1, 1, 2, 2, 4}, 1.0f);
  Var ov = tape.leaf(o);
  Var tv = tape.leaf(t);
  CHECK_THROWS_WITH_AS(loss_ae(ov, tv, 0.85), doctest::Contains("shape"), std::invalid_argument);
  Var tv2 = tape.leaf(Tensor({1, 1, 2, 2, 2}, 1.0f));
  CHECK_THROWS_WITH_AS(loss_ae(ov, tv2, 1.5), doctest::Contains("alpha"), std::invalid_argument);
}

TEST_CASE("loss_ae: analytic gradient matches float64 central differences") {
  const double alpha = 0.85;
  Tensor o = random_probs({1, 1, 4, 4, 4}, 21, 0.05, 0.95);
  Tensor t = random_binary({1, 1, 4, 4, 4}, 22);
  Tape tape;
  Var ov = tape.leaf(o, /*requires_grad=*/true);
  Var tv = tape.leaf(t);
  Var l = loss_ae(ov, tv, alpha);
  Var g = tape.grad(l, {ov})[0];

  std::vector<double> od(o.data(), o.data() + o.numel());
  std::vector<double> td(t.data(), t.data() + t.numel());
  const double h = 1e-6;
  for (int64_t i = 0; i < o.numel(); ++i) {
    std::vector<double> op = od;
    std::vector<double> om = od;
    op[static_cast<size_t>(i)] += h;
    om[static_cast<size_t>(i)] -= h;
    const double fd = (loss_ae_ref(op, td, alpha) - loss_ae_ref(om, td, alpha)) / (2.0 * h);
    const double an = static_cast<double>(g.value().data()[i]);
    CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(fd), 1e-4));
  }
}

// --------------------------------------------------------------- loss_total

TEST_CASE("loss_total: exact affine combination") {
  Tape tape;
  Var a = tape.leaf(Tensor({1}, 1.0f));
  Var b = tape.leaf(Tensor({1}, 2.0f));
  CHECK(loss_total(a, b, 0.8).value().data()[0] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(loss_total(a, b, 1.0).value().data()[0] == 1.0f);  // reduces to l_ae
  CHECK(loss_total(a, b, 0.0).value().data()[0] == 2.0f);  // reduces to l_gan_g
  CHECK_THROWS_WITH_AS(loss_total(a, b, -0.1), doctest::Contains("beta"), std::invalid_argument);
}

TEST_CASE("loss_total: gradient of the composed objective matches float64 FD") {
  const double alpha = 0.85;
  const double beta = 0.8;
  Tensor o = random_probs({1, 1, 4, 4, 4}, 31, 0.05, 0.95);
  Tensor t = random_binary({1, 1, 4, 4, 4}, 32);
  Tensor w = random_probs({1, 1, 4, 4, 4}, 33, -1.0, 1.0);

  Tape tape;
  Var ov = tape.leaf(o, /*requires_grad=*/true);
  Var tv = tape.leaf(t);
  Var wv = tape.leaf(w);
  // Stand-in GAN term: a fixed linear functional of the output.
  Var lg = autodiff::mean_all(autodiff::mul(ov, wv));
  Var total = loss_total(loss_ae(ov, tv, alpha), lg, beta);
  Var g = tape.grad(total, {ov})[0];

  std::vector<double> od(o.data(), o.data() + o.numel());
  std::vector<double> td(t.data(), t.data() + t.numel());
  std::vector<double> wd(w.data(), w.data() + w.numel());
  const auto ref = [&](const std::vector<double>& ox) {
    double lin = 0.0;
    for (size_t i = 0; i < ox.size(); ++i) lin += ox[i] * wd[i];
    lin /= static_cast<double>(ox.size());
    return beta * loss_ae_ref(ox, td, alpha) + (1.0 - beta) * lin;
  };
  const double h = 1e-6;
  for (int64_t i = 0; i < o.numel(); ++i) {
    std::vector<double> op = od;
    std::vector<double> om = od;
    op[static_cast<size_t>(i)] += h;
    om[static_cast<size_t>(i)] -= h;
    const double fd = (ref(op) - ref(om)) / (2.0 * h);
    const double an = static_cast<double>(g.value().data()[i]);
    CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(fd), 1e-4));
  }
}

// ------------------------------------------------------- gradient penalty

TEST_CASE("interpolate_samples: bitwise symmetric under operand exchange") {
  Tensor a = random_probs({3, 1, 4, 4, 4}, 41, 0.0, 1.0);
  Tensor b = random_probs({3, 1, 4, 4, 4}, 42, 0.0, 1.0);
  std::vector<float> ca = {0.125f, 0.7f, 0.999f};
  std::vector<float> cb(ca.size());
  for (size_t i = 0; i < ca.size(); ++i) cb[i] = 1.0f - ca[i];
  Tensor x1 = interpolate_samples(a, b, ca, cb);
  Tensor x2 = interpolate_samples(b, a, cb, ca);
  CHECK(tensors_equal(x1, x2));
  CHECK_THROWS_WITH_AS(interpolate_samples(a, Tensor({3, 1, 4, 4, 2}), ca, cb),
                       doctest::Contains("shapes"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(interpolate_samples(a, b, {0.5f}, cb), doctest::Contains("coefficient"),
                       std::invalid_argument);
}

TEST_CASE("gradient penalty: constant critic pays lambda per sample") {
  DiscriminatorSpec spec = slim_disc();
  Discriminator disc = make_discriminator(spec, 7);
  for (NamedTensor& p : disc.params)
    std::memset(p.value.data(), 0, sizeof(float) * static_cast<size_t>(p.value.numel()));

  const int64_t batch = 2;
  const int64_t s = spec.mask_spatial();
  Tensor xh = random_probs({batch, 1, spec.n, spec.n, spec.n}, 51, 0.0, 1.0);
  Tensor masks({batch, static_cast<int64_t>(kConditionLength), s, s, s});
  {
    Tensor one = encode_block_masks(Condition{0, 3, 0}, s);
    for (int64_t b = 0; b < batch; ++b)
      std::memcpy(masks.data() + b * one.numel(), one.data(),
                  sizeof(float) * static_cast<size_t>(one.numel()));
  }

  Tape tape;
  BoundParams pd = bind_params(tape, disc.params, true);
  Var xv = tape.leaf(xh, /*requires_grad=*/true);
  Var mv = tape.leaf(masks);
  Var scores = discriminator_forward(tape, spec, pd, xv, mv);
  for (int64_t b = 0; b < batch; ++b) CHECK(scores.value().data()[b] == 0.0f);

  Var gp = gradient_norm_penalty(tape, scores, xv);
  CHECK(std::abs(10.0 * static_cast<double>(gp.value().data()[0]) - 10.0) <= 1e-6);

  // The lambda-scaled penalty must still be differentiable wrt the critic
  // parameters (second backward pass through the square-root guard).
  Var scaled = autodiff::mul_scalar(gp, 10.0f);
  std::vector<Var> wrt;
  for (const auto& nv : pd.vars) wrt.push_back(nv.second);
  std::vector<Var> grads = tape.grad(scaled, wrt);
  for (const Var& g : grads)
    for (int64_t i = 0; i < g.value().numel(); ++i) CHECK(std::isfinite(g.value().data()[i]));
}

TEST_CASE("gradient penalty: unit-norm linear critic pays nothing") {
  const int64_t n = 16;
  Tape tape;
  Tensor xh = random_probs({2, 1, n, n, n}, 61, 0.0, 1.0);
  Var xv = tape.leaf(xh, /*requires_grad=*/true);
  // critic(x) = sum(x) / sqrt(D): gradient is exactly 1/sqrt(D) per element,
  // so the per-sample gradient norm is exactly 1 (D = 16^3 = 4096 = 64^2).
  Var scores = autodiff::mul_scalar(autodiff::per_sample_sum(xv), 1.0f / 64.0f);
  Var gp = gradient_norm_penalty(tape, scores, xv);
  CHECK(gp.value().data()[0] == 0.0f);
}

TEST_CASE("gradient penalty: rejects a detached interpolation point") {
  Tape tape;
  Tensor xh = random_probs({2, 1, 4, 4, 4}, 62, 0.0, 1.0);
  Var xv = tape.leaf(xh, /*requires_grad=*/false);
  Var scores = autodiff::per_sample_sum(xv);
  CHECK_THROWS_WITH_AS(gradient_norm_penalty(tape, scores, xv),
                       doctest::Contains("require gradients"), std::invalid_argument);
}

TEST_CASE("loss_gan: duplicated batches cancel the score terms exactly") {
  DiscriminatorSpec spec = slim_disc();
  Discriminator disc = make_discriminator(spec, 17);
  const int64_t batch = 2;
  const int64_t s = spec.mask_spatial();
  Tensor grid = random_binary({batch, 1, spec.n, spec.n, spec.n}, 71);
  Tensor masks({batch, static_cast<int64_t>(kConditionLength), s, s, s});
  {
    Tensor one = encode_block_masks(Condition{1, 2, 1}, s);
    for (int64_t b = 0; b < batch; ++b)
      std::memcpy(masks.data() + b * one.numel(), one.data(),
                  sizeof(float) * static_cast<size_t>(one.numel()));
  }
  std::vector<float> ca = {0.25f, 0.75f};
  std::vector<float> cb = {0.75f, 0.25f};
  Tensor xh = interpolate_samples(grid, grid, ca, cb);

  Tape tape;
  BoundParams pd = bind_params(tape, disc.params, true);
  Var real = tape.leaf(grid);
  Var fake = tape.leaf(grid);
  Var mv = tape.leaf(masks);
  Var xv = tape.leaf(xh, /*requires_grad=*/true);
  Var rs = discriminator_forward(tape, spec, pd, real, mv);
  Var fs = discriminator_forward(tape, spec, pd, fake, mv);
  Var hs = discriminator_forward(tape, spec, pd, xv, mv);
  GanLosses gl = loss_gan(tape, rs, fs, hs, xv, 10.0);

  const float d = gl.d_loss.value().data()[0];
  const float gp = gl.gp.value().data()[0];
  CHECK(d == 10.0f * gp);  // identical scores cancel bitwise
  CHECK(std::isfinite(gl.g_loss.value().data()[0]));
}

TEST_CASE("loss_gan: with lambda=0 the critic loss is antisymmetric in real/fake") {
  Tape tape;
  Tensor rs_t({3});
  Tensor fs_t({3});
  for (int i = 0; i < 3; ++i) {
    rs_t.data()[i] = 0.5f * static_cast<float>(i) - 0.3f;
    fs_t.data()[i] = 1.25f - 0.4f * static_cast<float>(i);
  }
  Tensor xh = random_probs({3, 1, 2, 2, 2}, 81, 0.0, 1.0);
  Var rv = tape.leaf(rs_t);
  Var fv = tape.leaf(fs_t);
  Var xv = tape.leaf(xh, /*requires_grad=*/true);
  Var hs = autodiff::per_sample_sum(xv);
  GanLosses ab = loss_gan(tape, rv, fv, hs, xv, 0.0);
  GanLosses ba = loss_gan(tape, fv, rv, hs, xv, 0.0);
  CHECK(ab.d_loss.value().data()[0] == -ba.d_loss.value().data()[0]);
}

// --------------------------------------------------------------------- Adam

TEST_CASE("adam_step: matches a float64 reference for two updates") {
  std::vector<NamedTensor> params;
  Tensor p0({3});
  p0.data()[0] = 1.0f;
  p0.data()[1] = -2.0f;
  p0.data()[2] = 0.5f;
  params.push_back({"w", p0});
  AdamState state = make_adam_state(params);

  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double pd[3] = {1.0, -2.0, 0.5};
  double md[3] = {0, 0, 0};
  double vd[3] = {0, 0, 0};
  const float gvals[2][3] = {{0.1f, -0.2f, 0.0f}, {-0.05f, 0.3f, 1.0f}};

  for (int step = 0; step < 2; ++step) {
    Tensor g({3});
    for (int i = 0; i < 3; ++i) g.data()[i] = gvals[step][i];
    adam_step(params, {g}, state, lr, b1, b2, eps);

    const double bc1 = 1.0 - std::pow(b1, step + 1);
    const double bc2 = 1.0 - std::pow(b2, step + 1);
    for (int i = 0; i < 3; ++i) {
      const double ge = gvals[step][i];
      md[i] = b1 * md[i] + (1 - b1) * ge;
      vd[i] = b2 * vd[i] + (1 - b2) * ge * ge;
      pd[i] -= lr * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + eps);
      CHECK(std::abs(params[0].value.data()[i] - pd[i]) <= 1e-7 * std::max(1.0, std::abs(pd[i])));
    }
  }
  CHECK(state.t == 2);
}

TEST_CASE("adam_step: rejects mismatched gradients") {
  std::vector<NamedTensor> params;
  params.push_back({"w", Tensor({3})});
  AdamState state = make_adam_state(params);
  CHECK_THROWS_WITH_AS(adam_step(params, {}, state, 1e-3, 0.9, 0.999, 1e-8),
                       doctest::Contains("count"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(adam_step(params, {Tensor({4})}, state, 1e-3, 0.9, 0.999, 1e-8),
                       doctest::Contains("shape"), std::invalid_argument);
}

// ------------------------------------------------------------- training loop

TEST_CASE("train: validates dataset and config up front") {
  GeneratorSpec gs = slim_gen();
  DiscriminatorSpec ds = slim_disc();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;

  Dataset empty;
  empty.n = 16;
  CHECK_THROWS_WITH_AS(train(empty, gs, ds, cfg), doctest::Contains("empty"),
                       std::invalid_argument);

  Dataset tiny = toy_dataset(16, 2);
  CHECK_THROWS_WITH_AS(train(tiny, gs, ds, cfg), doctest::Contains("fewer samples"),
                       std::invalid_argument);

  Dataset wrong = toy_dataset(16, 4);
  wrong.n = 32;
  for (auto& e : wrong.entries) {
    e.input.assign(32 * 32 * 32, 0);
    e.target.assign(32 * 32 * 32, 0);
  }
  CHECK_THROWS_WITH_AS(train(wrong, gs, ds, cfg), doctest::Contains("resolution"),
                       std::invalid_argument);

  TrainConfig bad = cfg;
  bad.beta = 1.5;
  CHECK_THROWS_WITH_AS(train(tiny, gs, ds, bad), doctest::Contains("beta"),
                       std::invalid_argument);
}

TEST_CASE("train: two runs with the same seed produce identical logs and parameters") {
  Dataset data = toy_dataset(16, 8);
  GeneratorSpec gs = slim_gen();
  DiscriminatorSpec ds = slim_disc();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;  // two generator steps
  cfg.seed = 99;

  TrainResult r1 = train(data, gs, ds, cfg);
  TrainResult r2 = train(data, gs, ds, cfg);
  REQUIRE(r1.log.rows.size() == 2);
  CHECK(train_log_matches(r1.log, r2.log, /*ignore_wall_time=*/true));
  CHECK(params_equal(r1.generator.params, r2.generator.params));
  CHECK(params_equal(r1.discriminator.params, r2.discriminator.params));
  CHECK_FALSE(r1.aborted);

  // The GAN path actually ran: critic loss and penalty were recorded.
  CHECK(r1.log.rows[0].gp_term != 0.0);
  CHECK(r1.log.rows[0].l_gan_g != 0.0);

  // A different seed must change the trajectory.
  TrainConfig other = cfg;
  other.seed = 100;
  TrainResult r3 = train(data, gs, ds, other);
  CHECK_FALSE(train_log_matches(r1.log, r3.log, /*ignore_wall_time=*/true));
}

TEST_CASE("train: learning rate drops from 5e-4 to 1e-4 after the first epoch") {
  Dataset data = toy_dataset(16, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;  // one step per epoch
  cfg.beta = 1.0;  // autoencoder only, keeps this test cheap
  cfg.seed = 3;

  TrainResult r = train(data, slim_gen(), slim_disc(), cfg);
  REQUIRE(r.log.rows.size() == 2);
  CHECK(r.log.rows[0].lr == 5e-4);
  CHECK(r.log.rows[1].lr == 1e-4);
  CHECK(r.log.rows[0].epoch == 0);
  CHECK(r.log.rows[1].epoch == 1);
  CHECK(r.log.rows[0].l_gan_d == 0.0);  // critic skipped at beta == 1
  CHECK(r.log.rows[0].gp_term == 0.0);
}

TEST_CASE("train: pure autoencoder loss decreases steadily on a tiny dataset") {
  Dataset data = toy_dataset(16, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 50;  // full-batch: 50 generator steps
  cfg.beta = 1.0;
  cfg.seed = 12;

  TrainResult r = train(data, slim_gen(), slim_disc(), cfg);
  REQUIRE(r.log.rows.size() == 50);
  for (size_t i = 1; i < r.log.rows.size(); ++i)
    CHECK(r.log.rows[i].l_ae < r.log.rows[i - 1].l_ae);
  CHECK(r.log.rows.back().l_ae < 0.98 * r.log.rows.front().l_ae);
  for (const TrainLogRow& row : r.log.rows) {
    CHECK(row.total == row.l_ae);  // beta == 1 reduces the objective to L_AE
    CHECK(std::isfinite(row.l_ae));
  }
}

TEST_CASE("train: non-finite loss aborts and keeps the last good parameters") {
  Dataset data = toy_dataset(16, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 10;
  cfg.beta = 1.0;
  cfg.lr_initial = 1e25;  // guaranteed blow-up
  cfg.lr_after_epoch1 = 1e25;
  cfg.seed = 5;

  TrainResult r = train(data, slim_gen(), slim_disc(), cfg);
  CHECK(r.aborted);
  CHECK(r.abort_reason.find("not finite") != std::string::npos);
  CHECK(r.log.rows.size() < 10);
  for (const TrainLogRow& row : r.log.rows) {
    CHECK(std::isfinite(row.l_ae));
    CHECK(std::isfinite(row.total));
  }
  CHECK(all_finite(r.generator.params));
  CHECK(all_finite(r.discriminator.params));
}

TEST_CASE("train: checkpoint carries parameters that reproduce inference bitwise") {
  Dataset data = toy_dataset(16, 4);
  GeneratorSpec gs = slim_gen();
  DiscriminatorSpec ds = slim_disc();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 21;

  TrainResult r = train(data, gs, ds, cfg);
  CHECK(r.checkpoint.generator_hash == gs.hash());
  CHECK(r.checkpoint.discriminator_hash == ds.hash());
  CHECK(r.checkpoint.epoch == 2);
  CHECK(r.checkpoint.step == 2);
  CHECK(r.checkpoint.seed == 21);

  // Optimizer moments ride along under the "opt." prefix.
  bool has_opt = false;
  for (const NamedTensor& b : r.checkpoint.blocks)
    if (b.name.rfind("opt.", 0) == 0) has_opt = true;
  CHECK(has_opt);

  Generator fresh = make_generator(gs, 777);  // different init, then overwritten
  get_blocks(r.checkpoint, "g.", fresh.params);
  CHECK(params_equal(fresh.params, r.generator.params));

  Tensor probe({16, 16, 16});
  Prng rng(55);
  for (int64_t i = 0; i < probe.numel(); ++i) probe.data()[i] = rng.below(2) ? 1.0f : 0.0f;
  Tensor a = generator_predict(r.generator, probe, Condition{0, 3, 0});
  Tensor b = generator_predict(fresh, probe, Condition{0, 3, 0});
  CHECK(tensors_equal(a, b));
}

TEST_CASE("train log: JSONL round-trip preserves every field exactly") {
  TrainLog log;
  for (int i = 0; i < 3; ++i) {
    TrainLogRow r;
    r.step = i + 1;
    r.epoch = i / 2;
    r.lr = (i == 0) ? 5e-4 : 1e-4;
    r.l_ae = 0.1234567890123 + i;
    r.l_gan_g = -0.987 * i;
    r.l_gan_d = 1.5e-3 * i;
    r.gp_term = 10.0 / (i + 1);
    r.total = r.l_ae * 0.8 + r.l_gan_g * 0.2;
    r.wall_ms = 123.456 + i;
    log.rows.push_back(r);
  }
  const std::string path = "trainlog_roundtrip.jsonl";
  save_train_log(log, path);
  TrainLog back = load_train_log(path);
  CHECK(train_log_matches(log, back, /*ignore_wall_time=*/false));
  std::remove(path.c_str());

  TrainLogRow a = log.rows[0];
  TrainLogRow b = a;
  b.wall_ms += 1.0;
  CHECK(train_log_rows_match(a, b, /*ignore_wall_time=*/true));
  CHECK_FALSE(train_log_rows_match(a, b, /*ignore_wall_time=*/false));
  b = a;
  b.l_ae += 1e-12;
  CHECK_FALSE(train_log_rows_match(a, b, /*ignore_wall_time=*/true));
}
