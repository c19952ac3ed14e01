// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/assess.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace flexvox {

// ----------------------------------------------------------- configuration

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config: value for '" + key + "' is not a number: " + text);
}

int64_t parse_int(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("config: value for '" + key + "' is not an integer: " + text);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

}  // namespace

std::string ConfigFile::get_string(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw std::invalid_argument("config: missing required key '" + key + "'");
  return it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key) const {
  return parse_double(key, get_string(key));
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : parse_double(key, it->second);
}

int64_t ConfigFile::get_int(const std::string& key) const {
  return parse_int(key, get_string(key));
}

int64_t ConfigFile::get_int(const std::string& key, int64_t fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : parse_int(key, it->second);
}

uint64_t ConfigFile::get_uint(const std::string& key, uint64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const int64_t v = parse_int(key, it->second);
  if (v < 0) throw std::invalid_argument("config: value for '" + key + "' must be non-negative");
  return static_cast<uint64_t>(v);
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            const std::vector<double>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<double> out;
  for (const std::string& part : split_list(it->second)) out.push_back(parse_double(key, part));
  if (out.empty()) throw std::invalid_argument("config: list for '" + key + "' is empty");
  return out;
}

std::vector<int> ConfigFile::get_ints(const std::string& key,
                                      const std::vector<int>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<int> out;
  for (const std::string& part : split_list(it->second))
    out.push_back(static_cast<int>(parse_int(key, part)));
  if (out.empty()) throw std::invalid_argument("config: list for '" + key + "' is empty");
  return out;
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not a key=value pair: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has an empty key");
    cfg.values[key] = value;
  }
  return cfg;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

GridSpec grid_from_keys(const ConfigFile& cfg) {
  GridSpec g;
  g.n = cfg.get_int("grid_n", 64);
  if (g.n < 8) throw std::invalid_argument("config: grid_n must be at least 8");
  // Default pitch keeps the 64 * 0.022 m physical extent at any resolution;
  // the origin keeps the undeformed surface two voxel layers below the top.
  g.pitch = cfg.get_double("pitch", 0.022 * 64.0 / static_cast<double>(g.n));
  g.origin = {0.0, 0.0, -static_cast<double>(g.n - 2) * g.pitch};
  return g;
}

}  // namespace

DatasetConfig dataset_config_from(const ConfigFile& cfg) {
  DatasetConfig c;
  c.grid = grid_from_keys(cfg);
  c.spans = cfg.get_doubles("spans", c.spans);
  c.holdout_spans = cfg.get_doubles("holdout_spans", {});
  const std::vector<double> forces =
      cfg.get_doubles("force_levels", {c.force_levels[0], c.force_levels[1]});
  if (forces.size() != 2)
    throw std::invalid_argument("config: force_levels must list exactly two values");
  c.force_levels = {forces[0], forces[1]};
  c.location_bins = cfg.get_ints("location_bins", c.location_bins);
  c.material_bins = cfg.get_ints("material_bins", c.material_bins);
  c.beam_width = cfg.get_double("beam_width", c.beam_width);
  c.beam_thickness = cfg.get_double("beam_thickness", c.beam_thickness);
  c.wood_young_modulus = cfg.get_double("wood_young_modulus", c.wood_young_modulus);
  c.aluminium_young_modulus = cfg.get_double("aluminium_young_modulus", c.aluminium_young_modulus);
  c.count = cfg.get_int("count", 0);
  c.seed = cfg.get_uint("seed", 0);
  return c;
}

SceneSpec scene_from_config(const ConfigFile& cfg) {
  SceneSpec s;
  s.grid = grid_from_keys(cfg);
  s.scene.beam.span = cfg.get_double("span");
  s.scene.beam.width = cfg.get_double("width", 0.15);
  s.scene.beam.thickness = cfg.get_double("thickness", 0.006);
  const std::string material = cfg.get_string("material", "wood");
  if (material == "wood")
    s.scene.beam.material = MaterialSpec::wood(cfg.get_double("young_modulus", 9e9));
  else if (material == "aluminium")
    s.scene.beam.material = MaterialSpec::aluminium(cfg.get_double("young_modulus", 69e9));
  else
    throw std::invalid_argument("config: material must be wood or aluminium, got " + material);
  s.scene.z_top = cfg.get_double("z_top", 0.0);
  s.load.force = cfg.get_double("force");
  s.load.application_point = cfg.get_double("location", 0.5);
  s.scene.beam.validate();
  if (s.load.force != 0.0) s.load.validate();
  s.condition.force_bin = nearest_force_bin(s.load.force);
  s.condition.location_bin = nearest_location_bin(s.load.application_point);
  s.condition.material_bin = s.scene.beam.material.material_bin();
  return s;
}

// ----------------------------------------------------------- depth file IO

namespace {

constexpr uint16_t kDepiVersion = 1;

void write_raw(std::ofstream& os, const void* p, size_t bytes) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
}

void read_raw(std::ifstream& is, void* p, size_t bytes, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (is.gcount() != static_cast<std::streamsize>(bytes))
    throw std::runtime_error(std::string("load_depth_image: truncated file while reading ") + what);
}

}  // namespace

void save_depth_image(const DepthImage& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.depth.size() != static_cast<size_t>(img.width * img.height))
    throw std::invalid_argument("save_depth_image: raster size does not match width*height");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_depth_image: cannot open " + path);
  write_raw(os, "DEPI", 4);
  write_raw(os, &kDepiVersion, 2);
  const uint8_t axis = static_cast<uint8_t>(img.view.axis);
  const int8_t sign = static_cast<int8_t>(img.view.sign);
  write_raw(os, &axis, 1);
  write_raw(os, &sign, 1);
  const uint32_t w = static_cast<uint32_t>(img.width), h = static_cast<uint32_t>(img.height);
  write_raw(os, &w, 4);
  write_raw(os, &h, 4);
  const float pitch = static_cast<float>(img.pixel_pitch);
  write_raw(os, &pitch, 4);
  write_raw(os, img.grid_origin.data(), 3 * sizeof(double));
  const uint32_t gn = static_cast<uint32_t>(img.grid_n);
  write_raw(os, &gn, 4);
  write_raw(os, img.depth.data(), img.depth.size() * sizeof(float));
  if (!os) throw std::runtime_error("save_depth_image: write failed for " + path);
}

DepthImage load_depth_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_depth_image: cannot open " + path);
  char magic[4];
  read_raw(is, magic, 4, "magic");
  if (std::memcmp(magic, "DEPI", 4) != 0)
    throw std::runtime_error("load_depth_image: bad magic in " + path);
  uint16_t version = 0;
  read_raw(is, &version, 2, "version");
  if (version != kDepiVersion)
    throw std::runtime_error("load_depth_image: unsupported version " + std::to_string(version));
  uint8_t axis = 0;
  int8_t sign = 0;
  read_raw(is, &axis, 1, "axis");
  read_raw(is, &sign, 1, "sign");
  if (axis > 2) throw std::runtime_error("load_depth_image: axis must be 0, 1, or 2");
  if (sign != 1 && sign != -1) throw std::runtime_error("load_depth_image: sign must be +1 or -1");
  uint32_t w = 0, h = 0;
  read_raw(is, &w, 4, "width");
  read_raw(is, &h, 4, "height");
  if (w == 0 || h == 0) throw std::runtime_error("load_depth_image: empty raster");
  DepthImage img;
  img.width = w;
  img.height = h;
  img.view.axis = axis;
  img.view.sign = sign;
  float pitch = 0.0f;
  read_raw(is, &pitch, 4, "pixel pitch");
  img.pixel_pitch = pitch;
  read_raw(is, img.grid_origin.data(), 3 * sizeof(double), "grid origin");
  uint32_t gn = 0;
  read_raw(is, &gn, 4, "grid resolution");
  img.grid_n = gn;
  img.depth.resize(static_cast<size_t>(img.width * img.height));
  read_raw(is, img.depth.data(), img.depth.size() * sizeof(float), "depth samples");
  return img;
}

// ------------------------------------------------------------- predictions

namespace {

// First occupied voxel from the bottom of column (i, j); -1 when empty.
int64_t bottom_k(const VoxelGrid& g, int64_t i, int64_t j) {
  for (int64_t k = 0; k < g.n; ++k)
    if (g.at(i, j, k)) return k;
  return -1;
}

}  // namespace

PredictionReport measure_deformation(const VoxelGrid& predicted, const Condition& condition,
                                     const VoxelGrid& reference) {
  // Shares the resolution/pitch validation (and the deflection definition)
  // with grid_metrics.
  const GridMetrics gm = grid_metrics(predicted, reference);
  PredictionReport r;
  r.predicted = predicted;
  r.condition = condition;
  for (int64_t j = 0; j < predicted.n; ++j)
    for (int64_t i = 0; i < predicted.n; ++i) {
      const int64_t kp = bottom_k(predicted, i, j);
      const int64_t kr = bottom_k(reference, i, j);
      if (kp < 0 || kr < 0) continue;
      ColumnDeflection c;
      c.i = i;
      c.j = j;
      c.deflection_voxels = kr - kp;  // downward positive
      c.deflection_cm = static_cast<double>(c.deflection_voxels) * predicted.pitch * 100.0;
      r.columns.push_back(c);
    }
  r.max_deflection_voxels = gm.max_deflection_error_voxels;
  r.max_deflection_cm = static_cast<double>(r.max_deflection_voxels) * predicted.pitch * 100.0;
  return r;
}

PredictionReport predict_deformation(const Generator& gen, const VoxelGrid& input,
                                     const Condition& condition, double threshold,
                                     const VoxelGrid& reference) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("predict_deformation: threshold must lie in (0, 1)");
  input.validate();
  Tensor in({input.n, input.n, input.n});
  const std::vector<float> flat = grid_as_floats(input);
  std::memcpy(in.data(), flat.data(), sizeof(float) * flat.size());

  const auto t0 = std::chrono::steady_clock::now();
  const Tensor out = generator_predict(gen, in, condition);
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  GridSpec spec;
  spec.n = input.n;
  spec.pitch = input.pitch;
  spec.origin = input.origin;
  const std::vector<float> probs(out.data(), out.data() + out.numel());
  const VoxelGrid pred = grid_from_floats(probs, spec, static_cast<float>(threshold));

  PredictionReport r = measure_deformation(pred, condition, reference);
  r.occupancy_threshold = threshold;
  r.inference_wall_ms = wall_ms;
  return r;
}

void save_prediction_report(const PredictionReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_prediction_report: cannot open " + path);
  nlohmann::ordered_json head;
  head["record"] = "prediction";
  head["threshold"] = report.occupancy_threshold;
  head["force_bin"] = report.condition.force_bin;
  head["location_bin"] = report.condition.location_bin;
  head["material_bin"] = report.condition.material_bin;
  head["max_deflection_cm"] = report.max_deflection_cm;
  head["max_deflection_voxels"] = report.max_deflection_voxels;
  head["columns"] = report.columns.size();
  head["inference_wall_ms"] = report.inference_wall_ms;
  out << head.dump() << '\n';
  for (const ColumnDeflection& c : report.columns) {
    nlohmann::ordered_json j;
    j["record"] = "column";
    j["i"] = c.i;
    j["j"] = c.j;
    j["voxels"] = c.deflection_voxels;
    j["cm"] = c.deflection_cm;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_prediction_report: write failed for " + path);
  save_voxg(report.predicted, path + ".voxg");
}

PredictionReport load_prediction_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_prediction_report: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_prediction_report: empty report " + path);
  nlohmann::json head = nlohmann::json::parse(line, nullptr, false);
  if (head.is_discarded() || head.value("record", "") != std::string("prediction"))
    throw std::runtime_error("load_prediction_report: not a prediction report: " + path);
  PredictionReport r;
  r.occupancy_threshold = head.at("threshold").get<double>();
  r.condition.force_bin = head.at("force_bin").get<int>();
  r.condition.location_bin = head.at("location_bin").get<int>();
  r.condition.material_bin = head.at("material_bin").get<int>();
  r.max_deflection_cm = head.at("max_deflection_cm").get<double>();
  r.max_deflection_voxels = head.at("max_deflection_voxels").get<int64_t>();
  r.inference_wall_ms = head.at("inference_wall_ms").get<double>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.value("record", "") != std::string("column")) continue;
    ColumnDeflection c;
    c.i = j.at("i").get<int64_t>();
    c.j = j.at("j").get<int64_t>();
    c.deflection_voxels = j.at("voxels").get<int64_t>();
    c.deflection_cm = j.at("cm").get<double>();
    r.columns.push_back(c);
  }
  r.predicted = load_voxg(path + ".voxg");
  return r;
}

// ------------------------------------------------------------------ safety

SafetyVerdict assess_deflection(double max_deflection_m, double clearance) {
  if (!(clearance > 0.0))
    throw std::invalid_argument("assess_deflection: clearance must be positive");
  SafetyVerdict v;
  v.clearance = clearance;
  v.margin = clearance - max_deflection_m;
  v.safe = v.margin > 0.0;  // deflection exactly at the clearance is unsafe
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max deflection %.4f m vs clearance %.4f m: %s (margin %.4f m)",
                max_deflection_m, clearance, v.safe ? "safe" : "unsafe", v.margin);
  v.rationale = buf;
  return v;
}

SafetyVerdict assess_report(const PredictionReport& report, double clearance) {
  return assess_deflection(report.max_deflection_cm / 100.0, clearance);
}

// ---------------------------------------------------------------- scenarios

std::vector<BoardCase> scenario_board_table(const BeamSpec& wood, const BeamSpec& aluminium,
                                            double clearance) {
  wood.validate();
  aluminium.validate();
  if (wood.material.kind != MaterialKind::wood ||
      aluminium.material.kind != MaterialKind::aluminium)
    throw std::invalid_argument("scenario_board_table: expected one wood and one aluminium board");
  std::vector<BoardCase> table;
  const struct {
    const char* label;
    const BeamSpec* beam;
    double force;
  } cases[] = {
      {"wood, robot", &wood, kDefaultForceLevels[0]},
      {"wood, robot + payload", &wood, kDefaultForceLevels[1]},
      {"aluminium, robot", &aluminium, kDefaultForceLevels[0]},
      {"aluminium, robot + payload", &aluminium, kDefaultForceLevels[1]},
  };
  for (const auto& c : cases) {
    BoardCase b;
    b.label = c.label;
    b.material_bin = c.beam->material.material_bin();
    b.force = c.force;
    LoadCase load;
    load.force = c.force;
    load.application_point = 0.5;
    b.deflection_m = beam_max_deflection(*c.beam, load).deflection;
    b.verdict = assess_deflection(b.deflection_m, clearance);
    table.push_back(b);
  }
  return table;
}

std::vector<WheelCase> scenario_wheel_table(const MaterialSpec& foam, double total_force,
                                            double clearance) {
  foam.validate();
  if (foam.kind != MaterialKind::foam)
    throw std::invalid_argument("scenario_wheel_table: material must be foam");
  if (!(total_force > 0.0))
    throw std::invalid_argument("scenario_wheel_table: total force must be positive");
  // Two castors and two drive wheels sharing the weight equally.
  const struct {
    const char* label;
    double px, py;
  } wheels[] = {
      {"castor left", 0.02, 0.02},
      {"castor right", 0.02, 0.02},
      {"drive left", 0.06, 0.03},
      {"drive right", 0.06, 0.03},
  };
  std::vector<WheelCase> table;
  for (const auto& w : wheels) {
    WheelCase c;
    c.label = w.label;
    c.patch_x_m = w.px;
    c.patch_y_m = w.py;
    c.force = total_force / 4.0;
    c.pressure = c.force / (w.px * w.py);
    // Winkler settlement; equals the indentation oracle's interior value.
    c.settlement_m = c.pressure / foam.foundation_modulus;
    c.verdict = assess_deflection(c.settlement_m, clearance);
    table.push_back(c);
  }
  return table;
}

// --------------------------------------------------------------- evaluation

namespace {

VoxelGrid grid_from_entry(const std::vector<uint8_t>& occ, int64_t n, double pitch) {
  VoxelGrid g(n, pitch);
  g.occ = occ;
  return g;
}

VoxelGrid predict_entry(const EvalPredictor& predictor, const Dataset& data,
                        const DatasetEntry& entry, double threshold) {
  if (predictor.generator == nullptr)
    return grid_from_entry(entry.target, data.n, data.pitch);  // oracle passthrough
  const VoxelGrid input = grid_from_entry(entry.input, data.n, data.pitch);
  Tensor in({data.n, data.n, data.n});
  const std::vector<float> flat = grid_as_floats(input);
  std::memcpy(in.data(), flat.data(), sizeof(float) * flat.size());
  const Tensor out = generator_predict(*predictor.generator, in, entry.condition);
  GridSpec spec;
  spec.n = data.n;
  spec.pitch = data.pitch;
  const std::vector<float> probs(out.data(), out.data() + out.numel());
  return grid_from_floats(probs, spec, static_cast<float>(threshold));
}

}  // namespace

double grid_iou(const VoxelGrid& a, const VoxelGrid& b) { return grid_metrics(a, b).iou; }

EvalReport evaluate_dataset(const EvalPredictor& predictor, const Dataset& data,
                            const std::string& mode, double threshold, double clearance) {
  EvalReport report;
  report.mode = mode;
  if (mode == "wheels") {
    // Per-wheel Winkler settlements for the robot alone and with payload; a
    // firm packaging foam rather than the soft calibration default, so the
    // verdict actually separates the wheel geometries.
    const MaterialSpec foam = MaterialSpec::foam(4e6);
    for (const double force : kDefaultForceLevels) {
      std::vector<WheelCase> rows = scenario_wheel_table(foam, force, clearance);
      const bool payload = force == kDefaultForceLevels[1];
      for (WheelCase& w : rows) {
        w.label += payload ? " (robot + payload)" : " (robot)";
        report.wheels.push_back(std::move(w));
      }
    }
    return report;
  }
  if (data.entries.empty()) throw std::invalid_argument("evaluate_dataset: dataset is empty");
  if (mode == "table") {
    std::map<std::tuple<int, int, int>, std::vector<int64_t>> errors;
    for (const DatasetEntry& e : data.entries) {
      const VoxelGrid pred = predict_entry(predictor, data, e, threshold);
      const VoxelGrid truth = grid_from_entry(e.target, data.n, data.pitch);
      const GridMetrics gm = grid_metrics(pred, truth);
      errors[{e.condition.material_bin, e.condition.force_bin, e.condition.location_bin}]
          .push_back(gm.max_deflection_error_voxels);
    }
    for (const auto& [key, errs] : errors) {
      EvalGroup g;
      g.condition.material_bin = std::get<0>(key);
      g.condition.force_bin = std::get<1>(key);
      g.condition.location_bin = std::get<2>(key);
      g.samples = static_cast<int64_t>(errs.size());
      double sq = 0.0;
      for (const int64_t e : errs) {
        const double cm = static_cast<double>(e) * data.pitch * 100.0;
        sq += cm * cm;
        g.max_error_voxels = std::max(g.max_error_voxels, e);
      }
      g.rmse_cm = std::sqrt(sq / static_cast<double>(errs.size()));
      report.groups.push_back(g);
    }
    return report;
  }
  if (mode == "holdout") {
    for (const DatasetEntry& e : data.entries) {
      const VoxelGrid pred = predict_entry(predictor, data, e, threshold);
      const VoxelGrid truth = grid_from_entry(e.target, data.n, data.pitch);
      const GridMetrics gm = grid_metrics(pred, truth);
      SpanEval s;
      s.span = e.span;
      s.force = e.force;
      s.condition = e.condition;
      s.error_voxels = gm.max_deflection_error_voxels;
      s.error_cm = static_cast<double>(s.error_voxels) * data.pitch * 100.0;
      s.iou = gm.iou;
      report.cases.push_back(s);
    }
    return report;
  }
  throw std::invalid_argument("evaluate_dataset: mode must be table, holdout, or wheels, got " +
                              mode);
}

void save_eval_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_eval_report: cannot open " + path);
  nlohmann::ordered_json head;
  head["record"] = "evaluation";
  head["mode"] = report.mode;
  out << head.dump() << '\n';
  for (const EvalGroup& g : report.groups) {
    nlohmann::ordered_json j;
    j["record"] = "group";
    j["material_bin"] = g.condition.material_bin;
    j["force_bin"] = g.condition.force_bin;
    j["location_bin"] = g.condition.location_bin;
    j["samples"] = g.samples;
    j["rmse_cm"] = g.rmse_cm;
    j["max_error_voxels"] = g.max_error_voxels;
    out << j.dump() << '\n';
  }
  for (const SpanEval& s : report.cases) {
    nlohmann::ordered_json j;
    j["record"] = "case";
    j["span"] = s.span;
    j["force"] = s.force;
    j["force_bin"] = s.condition.force_bin;
    j["location_bin"] = s.condition.location_bin;
    j["material_bin"] = s.condition.material_bin;
    j["error_voxels"] = s.error_voxels;
    j["error_cm"] = s.error_cm;
    j["iou"] = s.iou;
    out << j.dump() << '\n';
  }
  for (const WheelCase& w : report.wheels) {
    nlohmann::ordered_json j;
    j["record"] = "wheel";
    j["label"] = w.label;
    j["patch_x_m"] = w.patch_x_m;
    j["patch_y_m"] = w.patch_y_m;
    j["force"] = w.force;
    j["pressure"] = w.pressure;
    j["settlement_m"] = w.settlement_m;
    j["safe"] = w.verdict.safe;
    j["margin_m"] = w.verdict.margin;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_eval_report: write failed for " + path);
}

namespace {

struct Bar {
  std::string label;
  double value = 0.0;
  bool flagged = false;
};

void write_bar_chart(const std::string& path, const std::string& title, const std::string& unit,
                     const std::vector<Bar>& bars, double reference_line) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_eval_plot: cannot open " + path);
  const int width = 720, height = 420;
  const int left = 60, right = 20, top = 50, bottom = 90;
  const int plot_w = width - left - right, plot_h = height - top - bottom;
  double vmax = reference_line;
  for (const Bar& b : bars) vmax = std::max(vmax, b.value);
  if (vmax <= 0.0) vmax = 1.0;
  vmax *= 1.15;

  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"16\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  std::snprintf(buf, sizeof(buf), "%.3g %s", vmax / 1.15, unit.c_str());
  out << "<text x=\"" << left - 6 << "\" y=\"" << top + 12
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
      << "</text>\n";
  const size_t count = bars.empty() ? 1 : bars.size();
  const double slot = static_cast<double>(plot_w) / static_cast<double>(count);
  for (size_t i = 0; i < bars.size(); ++i) {
    const double h = bars[i].value / vmax * plot_h;
    const double x = left + slot * static_cast<double>(i) + slot * 0.15;
    const double y = top + plot_h - h;
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot * 0.7 << "\" height=\""
        << h << "\" fill=\"" << (bars[i].flagged ? "#c0392b" : "#2d7dd2") << "\"/>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", bars[i].value);
    out << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << y - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << buf
        << "</text>\n";
    out << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << top + plot_h + 14
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" transform=\"rotate(-35 "
        << x + slot * 0.35 << ' ' << top + plot_h + 14 << ")\">" << bars[i].label << "</text>\n";
  }
  if (reference_line > 0.0) {
    const double y = top + plot_h - reference_line / vmax * plot_h;
    out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\""
        << y << "\" stroke=\"#c0392b\" stroke-dasharray=\"6 4\"/>\n";
    std::snprintf(buf, sizeof(buf), "clearance %.3g %s", reference_line, unit.c_str());
    out << "<text x=\"" << left + plot_w - 4 << "\" y=\"" << y - 5
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#c0392b\">"
        << buf << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("save_eval_plot: write failed for " + path);
}

}  // namespace

void save_eval_plot(const EvalReport& report, const std::string& path) {
  std::vector<Bar> bars;
  char buf[128];
  if (report.mode == "table") {
    for (const EvalGroup& g : report.groups) {
      std::snprintf(buf, sizeof(buf), "m%d f%d l%d", g.condition.material_bin,
                    g.condition.force_bin, g.condition.location_bin);
      bars.push_back({buf, g.rmse_cm, false});
    }
    write_bar_chart(path, "max-deflection RMSE by condition group", "cm", bars, 0.0);
  } else if (report.mode == "holdout") {
    for (const SpanEval& s : report.cases) {
      std::snprintf(buf, sizeof(buf), "%.2f m f%d", s.span, s.condition.force_bin);
      bars.push_back({buf, static_cast<double>(s.error_voxels), s.error_voxels > 2});
    }
    write_bar_chart(path, "held-out span max-deflection error", "voxels", bars, 0.0);
  } else if (report.mode == "wheels") {
    double clearance = 0.0;
    for (const WheelCase& w : report.wheels) {
      bars.push_back({w.label, w.settlement_m, !w.verdict.safe});
      clearance = w.verdict.clearance;
    }
    write_bar_chart(path, "per-wheel foam settlement", "m", bars, clearance);
  } else {
    throw std::invalid_argument("save_eval_plot: unknown mode " + report.mode);
  }
}

}  // namespace flexvox
