// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0
//
// flexvox command-line front end: dataset generation, training, single-scene
// prediction, safety assessment, and batch evaluation.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexvox/assess.hpp"
#include "flexvox/model.hpp"
#include "flexvox/physics.hpp"
#include "flexvox/trainer.hpp"
#include "flexvox/voxel.hpp"

namespace {

using namespace flexvox;

// Recover the architecture of a checkpointed generator by matching its spec
// hash against the standard resolutions.
GeneratorSpec generator_spec_for_hash(uint64_t hash) {
  for (int64_t n : {16, 32, 64}) {
    const GeneratorSpec spec = GeneratorSpec::for_resolution(n);
    if (spec.hash() == hash) return spec;
  }
  throw std::runtime_error(
      "checkpoint: generator spec hash matches none of the standard resolutions (16, 32, 64)");
}

Generator load_generator_from(const std::string& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  Generator gen = make_generator(generator_spec_for_hash(ck.generator_hash), 0);
  get_blocks(ck, "g.", gen.params);
  return gen;
}

int material_bin_from_name(const std::string& name) {
  if (name == "wood") return 0;
  if (name == "aluminium") return 1;
  if (name == "foam") return 0;  // foam training data rides material bin 0
  throw std::runtime_error("predict: material must be wood, aluminium, or foam, got " + name);
}

int cmd_generate(const std::string& config_path, const std::string& out_path, bool seed_given,
                 uint64_t seed) {
  DatasetConfig cfg = dataset_config_from(load_config(config_path));
  if (seed_given) cfg.seed = seed;
  const Dataset ds = generate_dataset(cfg);
  save_dataset(ds, out_path);
  std::fprintf(stderr, "generate: %zu samples at n=%" PRId64 " (pitch %.4f m) -> %s\n",
               ds.entries.size(), ds.n, ds.pitch, out_path.c_str());
  return 0;
}

int cmd_train(const std::string& data_path, int64_t grid_n, double alpha, double beta,
              int64_t epochs, uint64_t seed, const std::string& out_path,
              std::string log_path) {
  const Dataset data = load_dataset(data_path);
  if (data.n != grid_n)
    throw std::runtime_error("train: dataset resolution " + std::to_string(data.n) +
                             " does not match --grid " + std::to_string(grid_n));
  TrainConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.validate();

  const GeneratorSpec gen_spec = GeneratorSpec::for_resolution(grid_n);
  const DiscriminatorSpec disc_spec = DiscriminatorSpec::for_resolution(grid_n);
  std::fprintf(stderr,
               "train: %zu samples, n=%" PRId64 ", alpha=%.3f, beta=%.3f, %" PRId64
               " epoch(s), seed=%" PRIu64 "\n",
               data.entries.size(), grid_n, alpha, beta, epochs, seed);

  const TrainResult result =
      train(data, gen_spec, disc_spec, cfg, [](const TrainLogRow& row) {
        if (row.step == 1 || row.step % 10 == 0)
          std::fprintf(stderr,
                       "  step %5" PRId64 " epoch %3" PRId64
                       "  lr %.2e  l_ae %.5f  total %.5f\n",
                       row.step, row.epoch, row.lr, row.l_ae, row.total);
      });

  save_checkpoint(result.checkpoint, out_path);
  if (log_path.empty()) log_path = out_path + ".log";
  save_train_log(result.log, log_path);
  std::fprintf(stderr, "train: checkpoint -> %s, log -> %s\n", out_path.c_str(),
               log_path.c_str());
  if (result.aborted) {
    std::fprintf(stderr, "train: ABORTED (%s); checkpoint holds the last good parameters\n",
                 result.abort_reason.c_str());
    return 2;
  }
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& depth_path,
                const std::string& scene_path, int force_bin, int location_bin,
                const std::string& material, double threshold, const std::string& out_path) {
  const Generator gen = load_generator_from(ckpt_path);

  VoxelGrid input;
  Condition cond;
  if (!scene_path.empty()) {
    const SceneSpec scene = scene_from_config(load_config(scene_path));
    if (scene.grid.n != gen.spec.n)
      throw std::runtime_error("predict: scene grid_n " + std::to_string(scene.grid.n) +
                               " does not match the checkpoint resolution " +
                               std::to_string(gen.spec.n));
    const Sample sample = generate_sample(scene.scene, scene.load, scene.grid, scene.view);
    input = sample.input_grid;
    cond = scene.condition;
  } else {
    const DepthImage img = load_depth_image(depth_path);
    if (img.grid_n != gen.spec.n)
      throw std::runtime_error("predict: depth image grid " + std::to_string(img.grid_n) +
                               " does not match the checkpoint resolution " +
                               std::to_string(gen.spec.n));
    GridSpec spec;
    spec.n = img.grid_n;
    spec.pitch = img.pixel_pitch;
    spec.origin = img.grid_origin;
    input = depth_to_grid(img, spec);
  }
  // Explicit condition flags override (and are required with --depth).
  if (force_bin >= 0) cond.force_bin = force_bin;
  if (location_bin >= 0) cond.location_bin = location_bin;
  if (!material.empty()) cond.material_bin = material_bin_from_name(material);
  if (scene_path.empty() && (force_bin < 0 || location_bin < 0 || material.empty()))
    throw std::runtime_error("predict: --depth input needs --force, --loc, and --material");

  const PredictionReport report = predict_deformation(gen, input, cond, threshold, input);
  save_prediction_report(report, out_path);
  std::printf("max deflection: %" PRId64 " voxel(s), %.3f cm\n", report.max_deflection_voxels,
              report.max_deflection_cm);
  std::printf("columns compared: %zu, inference %.1f ms\n", report.columns.size(),
              report.inference_wall_ms);
  std::printf("report: %s (grid sidecar %s.voxg)\n", out_path.c_str(), out_path.c_str());
  return 0;
}

int cmd_assess(const std::string& report_path, double clearance) {
  const PredictionReport report = load_prediction_report(report_path);
  const SafetyVerdict verdict = assess_report(report, clearance);
  std::printf("%s\n", verdict.rationale.c_str());
  std::printf("verdict: %s\n", verdict.safe ? "SAFE" : "UNSAFE");
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& mode, const std::string& out_dir, double threshold,
                 double clearance) {
  Generator gen;
  EvalPredictor predictor;
  if (!ckpt_path.empty()) {
    gen = load_generator_from(ckpt_path);
    predictor.generator = &gen;
  } else {
    std::fprintf(stderr, "evaluate: no checkpoint given, scoring the oracle passthrough\n");
  }
  Dataset data;
  if (mode != "wheels") {
    if (data_path.empty()) throw std::runtime_error("evaluate: --data is required for " + mode);
    data = load_dataset(data_path);
  }
  const EvalReport report = evaluate_dataset(predictor, data, mode, threshold, clearance);

  std::filesystem::create_directories(out_dir);
  const std::string report_path = out_dir + "/evaluation.jsonl";
  const std::string plot_path = out_dir + "/evaluation.svg";
  save_eval_report(report, report_path);
  save_eval_plot(report, plot_path);

  for (const EvalGroup& g : report.groups)
    std::printf("group material=%d force=%d location=%d  samples=%" PRId64
                "  rmse %.4f cm  max err %" PRId64 " voxel(s)\n",
                g.condition.material_bin, g.condition.force_bin, g.condition.location_bin,
                g.samples, g.rmse_cm, g.max_error_voxels);
  for (const SpanEval& s : report.cases)
    std::printf("case span=%.3f m force=%.1f N  err %" PRId64 " voxel(s) (%.3f cm)  iou %.4f\n",
                s.span, s.force, s.error_voxels, s.error_cm, s.iou);
  for (const WheelCase& w : report.wheels)
    std::printf("wheel %-28s %.1f N  %.2f kPa  settles %.4f m  %s\n", w.label.c_str(), w.force,
                w.pressure / 1e3, w.settlement_m, w.verdict.safe ? "SAFE" : "UNSAFE");
  std::printf("evaluate: report -> %s, plot -> %s\n", report_path.c_str(), plot_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flexvox: voxel deformation prediction and load-bearing safety assessment"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a beam deformation dataset");
  std::string gen_config, gen_out;
  uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "Dataset config file (key=value)")->required();
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Override the config's subsample seed");

  // train
  auto* tr = app.add_subcommand("train", "Train the deformation model on a dataset");
  std::string tr_data, tr_out, tr_log;
  int64_t tr_grid = 64, tr_epochs = 1;
  double tr_alpha = 0.0, tr_beta = 0.0;
  uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Training dataset path")->required();
  tr->add_option("--grid", tr_grid, "Grid resolution the model is built for")->required();
  tr->add_option("--alpha", tr_alpha, "Weighted-BCE occupancy weight in [0,1]")->required();
  tr->add_option("--beta", tr_beta, "Reconstruction share of the objective in [0,1]")->required();
  tr->add_option("--epochs", tr_epochs, "Number of passes over the dataset");
  tr->add_option("--seed", tr_seed, "Initialization/shuffle seed");
  tr->add_option("--out", tr_out, "Checkpoint output path")->required();
  tr->add_option("--log", tr_log, "Training log path (default: <out>.log)");

  // predict
  auto* pr = app.add_subcommand("predict", "Predict the deformed shape of one scene");
  std::string pr_ckpt, pr_depth, pr_scene, pr_material, pr_out;
  int pr_force = -1, pr_loc = -1;
  double pr_threshold = 0.5;
  pr->add_option("--ckpt", pr_ckpt, "Model checkpoint")->required();
  auto* pr_depth_opt = pr->add_option("--depth", pr_depth, "Depth image of the scene (DEPI)");
  auto* pr_scene_opt = pr->add_option("--scene", pr_scene, "Scene config file (key=value)");
  pr_depth_opt->excludes(pr_scene_opt);
  pr->add_option("--force", pr_force, "Force bin: 0 = robot, 1 = robot + payload")
      ->check(CLI::Range(0, 1));
  pr->add_option("--loc", pr_loc, "Load location bin 0..6 (span fractions 1/8..7/8)")
      ->check(CLI::Range(0, 6));
  pr->add_option("--material", pr_material, "Material: wood, aluminium, or foam");
  pr->add_option("--threshold", pr_threshold, "Occupancy threshold in (0,1)");
  pr->add_option("--out", pr_out, "Prediction report output path")->required();

  // assess
  auto* as = app.add_subcommand("assess", "Issue a safety verdict for a prediction report");
  std::string as_report;
  double as_clearance = flexvox::kDefaultClearance;
  as->add_option("--report", as_report, "Prediction report path")->required();
  as->add_option("--clearance", as_clearance, "Allowed deflection clearance in metres");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a model over a dataset or scenario");
  std::string ev_ckpt, ev_data, ev_mode, ev_out_dir = ".";
  double ev_threshold = 0.5, ev_clearance = flexvox::kDefaultClearance;
  ev->add_option("--ckpt", ev_ckpt, "Model checkpoint (omit for the oracle passthrough)");
  ev->add_option("--data", ev_data, "Dataset path (table/holdout modes)");
  ev->add_option("--mode", ev_mode, "table, holdout, or wheels")->required();
  ev->add_option("--out-dir", ev_out_dir, "Directory for the report and plot");
  ev->add_option("--threshold", ev_threshold, "Occupancy threshold in (0,1)");
  ev->add_option("--clearance", ev_clearance, "Clearance for wheel verdicts in metres");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(gen_config, gen_out, gen_seed_opt->count() > 0, gen_seed);
    if (tr->parsed())
      return cmd_train(tr_data, tr_grid, tr_alpha, tr_beta, tr_epochs, tr_seed, tr_out, tr_log);
    if (pr->parsed()) {
      if (pr_depth_opt->count() == 0 && pr_scene_opt->count() == 0)
        throw std::runtime_error("predict: one of --depth or --scene is required");
      return cmd_predict(pr_ckpt, pr_depth, pr_scene, pr_force, pr_loc, pr_material,
                         pr_threshold, pr_out);
    }
    if (as->parsed()) return cmd_assess(as_report, as_clearance);
    if (ev->parsed())
      return cmd_evaluate(ev_ckpt, ev_data, ev_mode, ev_out_dir, ev_threshold, ev_clearance);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
