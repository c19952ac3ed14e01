// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flexvox/model.hpp"
#include "flexvox/physics.hpp"
#include "flexvox/voxel.hpp"

namespace flexvox {

// ----------------------------------------------------------- configuration

// Plain key=value files, one pair per line, '#' starts a comment. Unknown
// keys are preserved; typed getters throw std::invalid_argument naming the
// key when it is missing or malformed.
struct ConfigFile {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  // Comma-separated lists.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
};

ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);

// Dataset description from a config file. Recognized keys: grid_n, pitch,
// spans, holdout_spans, force_levels, location_bins, material_bins,
// beam_width, beam_thickness, wood_young_modulus, aluminium_young_modulus,
// count, seed. The grid keeps the default physical extent: the pitch
// default scales as 0.022 * 64 / grid_n and the origin keeps the undeformed
// surface two layers below the grid top.
DatasetConfig dataset_config_from(const ConfigFile& cfg);

// Beam scene description from a config file. Recognized keys: span, width,
// thickness, material (wood|aluminium), force, location (fraction of span),
// grid_n, pitch. Returns the pieces cmd_predict needs.
struct SceneSpec {
  BeamScene scene;
  LoadCase load;
  GridSpec grid;
  OrthoView view{1, 1};
  Condition condition;
};
SceneSpec scene_from_config(const ConfigFile& cfg);

// ----------------------------------------------------------- depth file IO

// "DEPI" raster container for orthographic depth images: header (magic,
// version u16, axis u8, sign i8, width/height u32, pixel pitch f32, grid
// origin f64 x3, grid n u32), then width*height little-endian f32 samples
// (+inf marks no hit).
void save_depth_image(const DepthImage& img, const std::string& path);
DepthImage load_depth_image(const std::string& path);

// ------------------------------------------------------------- predictions

struct ColumnDeflection {
  int64_t i = 0, j = 0;            // column indices in the grid
  int64_t deflection_voxels = 0;   // bottom-surface shift vs the reference
  double deflection_cm = 0.0;
};

struct PredictionReport {
  VoxelGrid predicted;             // generator output, thresholded
  double occupancy_threshold = 0.5;
  Condition condition;
  std::vector<ColumnDeflection> columns;  // columns occupied in both grids
  double max_deflection_cm = 0.0;
  int64_t max_deflection_voxels = 0;
  double inference_wall_ms = 0.0;
};

// Run the generator on an input occupancy grid and measure the per-column
// bottom-surface deflection of the thresholded output against the
// undeformed reference grid (same resolution/pitch rules as grid_metrics).
PredictionReport predict_deformation(const Generator& gen, const VoxelGrid& input,
                                     const Condition& condition, double threshold,
                                     const VoxelGrid& reference);

// Measure a grid that is already available (oracle targets, stubs).
PredictionReport measure_deformation(const VoxelGrid& predicted, const Condition& condition,
                                     const VoxelGrid& reference);

// Line-delimited records: one summary line, then one line per column.
// The predicted grid itself is stored next to the report at path + ".voxg".
void save_prediction_report(const PredictionReport& report, const std::string& path);
PredictionReport load_prediction_report(const std::string& path);

// ------------------------------------------------------------------ safety

struct SafetyVerdict {
  bool safe = false;
  double clearance = 0.0;  // m
  double margin = 0.0;     // clearance - max deflection, m
  std::string rationale;
};

inline constexpr double kDefaultClearance = 0.015;  // m

// Safe iff the maximum deflection is strictly below the clearance.
SafetyVerdict assess_deflection(double max_deflection_m, double clearance);
SafetyVerdict assess_report(const PredictionReport& report, double clearance);

// ---------------------------------------------------------------- scenarios

// Four single-board cases (two materials x robot alone / robot + payload)
// assessed with the closed-form oracle as the predictor.
struct BoardCase {
  std::string label;
  int material_bin = 0;
  double force = 0.0;        // N
  double deflection_m = 0.0; // oracle midspan-load maximum
  SafetyVerdict verdict;
};
std::vector<BoardCase> scenario_board_table(const BeamSpec& wood, const BeamSpec& aluminium,
                                            double clearance);

// Per-wheel foam settlements: two castor and two drive wheels sharing the
// robot weight equally, assessed against the clearance.
struct WheelCase {
  std::string label;
  double patch_x_m = 0.0, patch_y_m = 0.0;  // footprint edge lengths
  double force = 0.0;                       // N on this wheel
  double pressure = 0.0;                    // Pa
  double settlement_m = 0.0;
  SafetyVerdict verdict;
};
std::vector<WheelCase> scenario_wheel_table(const MaterialSpec& foam, double total_force,
                                            double clearance);

// --------------------------------------------------------------- evaluation

// Predictor used by evaluate_dataset: a trained generator, or the oracle
// passthrough stub that returns each sample's target unchanged.
struct EvalPredictor {
  const Generator* generator = nullptr;  // null = oracle passthrough
};

struct EvalGroup {
  Condition condition;     // group key (force, location, material bins)
  int64_t samples = 0;
  double rmse_cm = 0.0;    // RMS of per-sample max-deflection error
  int64_t max_error_voxels = 0;
};

struct SpanEval {
  double span = 0.0;
  double force = 0.0;
  Condition condition;
  int64_t error_voxels = 0;  // max per-column bottom-surface error vs target
  double error_cm = 0.0;
  double iou = 0.0;
};

struct EvalReport {
  std::string mode;
  std::vector<EvalGroup> groups;  // table mode
  std::vector<SpanEval> cases;    // holdout mode (one row per sample)
  std::vector<WheelCase> wheels;  // wheels mode
};

// table: per-(force, location, material) RMSE of the max-deflection error
//   between prediction and oracle target, in cm.
// holdout: one row per sample with its voxel error (grouped by span via the
//   provenance fields when present).
// wheels: per-wheel oracle settlements; with a generator, each wheel's foam
//   sample is also predicted and its voxel error reported via the cases rows.
EvalReport evaluate_dataset(const EvalPredictor& predictor, const Dataset& data,
                            const std::string& mode, double threshold = 0.5,
                            double clearance = kDefaultClearance);

// Render an evaluation as line-delimited records / as a simple SVG bar chart.
void save_eval_report(const EvalReport& report, const std::string& path);
void save_eval_plot(const EvalReport& report, const std::string& path);

// IoU between two occupancy grids (shortcut over grid_metrics for callers
// that only need the overlap score).
double grid_iou(const VoxelGrid& a, const VoxelGrid& b);

}  // namespace flexvox
