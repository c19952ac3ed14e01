// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/physics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flexvox/prng.hpp"

namespace flexvox {

// ----------------------------------------------------------------- specs

MaterialSpec MaterialSpec::wood(double young_modulus) {
  return MaterialSpec{MaterialKind::wood, young_modulus, 0.0};
}

MaterialSpec MaterialSpec::aluminium(double young_modulus) {
  return MaterialSpec{MaterialKind::aluminium, young_modulus, 0.0};
}

MaterialSpec MaterialSpec::foam(double foundation_modulus) {
  return MaterialSpec{MaterialKind::foam, 0.0, foundation_modulus};
}

int MaterialSpec::material_bin() const {
  switch (kind) {
    case MaterialKind::wood: return 0;
    case MaterialKind::aluminium: return 1;
    case MaterialKind::foam: break;
  }
  throw std::invalid_argument("MaterialSpec: foam has no condition material bin");
}

void MaterialSpec::validate() const {
  if (kind == MaterialKind::foam) {
    if (!(foundation_modulus > 0.0))
      throw std::invalid_argument("MaterialSpec: foundation_modulus must be positive");
  } else {
    if (!(young_modulus > 0.0))
      throw std::invalid_argument("MaterialSpec: young_modulus must be positive");
  }
}

void BeamSpec::validate() const {
  if (!(span > 0.0)) throw std::invalid_argument("BeamSpec: span must be positive");
  if (!(width > 0.0)) throw std::invalid_argument("BeamSpec: width must be positive");
  if (!(thickness > 0.0)) throw std::invalid_argument("BeamSpec: thickness must be positive");
  if (material.kind == MaterialKind::foam)
    throw std::invalid_argument("BeamSpec: beam material cannot be foam");
  material.validate();
}

void LoadCase::validate() const {
  if (!(force >= 0.0)) throw std::invalid_argument("LoadCase: force must be non-negative");
  if (!(application_point > 0.0) || !(application_point < 1.0))
    throw std::invalid_argument("LoadCase: application_point must lie in (0, 1)");
  if (!(patch_width >= 0.0))
    throw std::invalid_argument("LoadCase: patch_width must be non-negative");
}

// ------------------------------------------------------------------ bins

double location_fraction(int location_bin) {
  if (location_bin < 0 || location_bin >= kLocationBins)
    throw std::invalid_argument("location_fraction: bin outside [0, " +
                                std::to_string(kLocationBins) + ")");
  return static_cast<double>(location_bin + 1) / 8.0;
}

int nearest_force_bin(double force, const std::array<double, 2>& levels) {
  // Ties resolve to the lower bin.
  return std::abs(force - levels[1]) < std::abs(force - levels[0]) ? 1 : 0;
}

int nearest_location_bin(double fraction) {
  int best = 0;
  double best_d = std::abs(fraction - location_fraction(0));
  for (int b = 1; b < kLocationBins; ++b) {
    const double d = std::abs(fraction - location_fraction(b));
    if (d < best_d) {
      best = b;
      best_d = d;
    }
  }
  return best;
}

// ------------------------------------------------------------ beam model

namespace {

// One-sided simply-supported point-load solution: deflection at x measured
// from the support nearer which the load sits at distance a (x <= a side
// handled by the caller via mirroring).
double ss_point_load_branch(double F, double L, double EI, double b, double x) {
  return F * b * x * (L * L - b * b - x * x) / (6.0 * L * EI);
}

void check_point_load(const BeamSpec& beam, const LoadCase& load, const char* op) {
  beam.validate();
  load.validate();
  if (load.patch_width != 0.0)
    throw std::invalid_argument(std::string(op) + ": patch loads are not supported");
}

}  // namespace

double beam_deflection(const BeamSpec& beam, const LoadCase& load, double x) {
  check_point_load(beam, load, "beam_deflection");
  const double L = beam.span;
  if (x < 0.0 || x > L)
    throw std::invalid_argument("beam_deflection: x outside [0, span]");
  const double EI = beam.material.young_modulus * beam.inertia();
  const double a = load.application_point * L;
  const double b = L - a;
  if (x <= a) return ss_point_load_branch(load.force, L, EI, b, x);
  // Mirror: measure from the right support, where the load sits at b.
  return ss_point_load_branch(load.force, L, EI, a, L - x);
}

BeamMax beam_max_deflection(const BeamSpec& beam, const LoadCase& load) {
  check_point_load(beam, load, "beam_max_deflection");
  const double L = beam.span;
  const double EI = beam.material.young_modulus * beam.inertia();
  const double a = load.application_point * L;
  const double b = L - a;
  BeamMax out;
  if (load.force == 0.0) {
    out.x = L / 2.0;
    return out;
  }
  // The maximum lies in the longer segment at distance sqrt((L^2 - c^2)/3)
  // from its support, where c is the shorter load offset.
  const double c = std::min(a, b);
  const double xm = std::sqrt((L * L - c * c) / 3.0);
  out.x = a >= b ? xm : L - xm;
  out.deflection =
      load.force * c * std::pow(L * L - c * c, 1.5) / (9.0 * std::sqrt(3.0) * L * EI);
  return out;
}

std::vector<double> beam_deflection_fd(const BeamSpec& beam, const LoadCase& load,
                                       int64_t n_nodes) {
  check_point_load(beam, load, "beam_deflection_fd");
  if (n_nodes < 16)
    throw std::invalid_argument("beam_deflection_fd: n_nodes must be at least 16");

  const double L = beam.span;
  const double EI = beam.material.young_modulus * beam.inertia();
  const int64_t n = n_nodes;
  const int64_t m = n - 2;  // interior unknowns w[1..n-2]
  const double h = L / static_cast<double>(n - 1);

  // E*I*w'''' = q discretized with the 5-point stencil. Simply-supported
  // ends (w = w'' = 0) give ghost values w[-1] = -w[1], w[n] = -w[n-2],
  // which fold into the first/last diagonal entries (6 -> 5).
  // Band storage: band[r][c - r + 2] holds A[r][c] for |c - r| <= 2.
  std::vector<std::array<double, 5>> band(static_cast<size_t>(m),
                                          {0.0, 0.0, 0.0, 0.0, 0.0});
  for (int64_t r = 0; r < m; ++r) {
    band[static_cast<size_t>(r)][2] = (r == 0 || r == m - 1) ? 5.0 : 6.0;
    if (r >= 1) band[static_cast<size_t>(r)][1] = -4.0;
    if (r >= 2) band[static_cast<size_t>(r)][0] = 1.0;
    if (r + 1 < m) band[static_cast<size_t>(r)][3] = -4.0;
    if (r + 2 < m) band[static_cast<size_t>(r)][4] = 1.0;
  }

  // Point load at x = a lumped linearly onto the two adjacent nodes; the
  // split preserves both total force and first moment. Nodal force F_i is
  // the distributed equivalent q_i = F_i / h, so the stencil right side is
  // q_i * h^4 / (E*I) = F_i * h^3 / (E*I). Shares landing on a support
  // node are carried directly into the reaction and drop out.
  std::vector<double> rhs(static_cast<size_t>(m), 0.0);
  const double a = load.application_point * L;
  const int64_t node = std::min<int64_t>(static_cast<int64_t>(std::floor(a / h)), n - 2);
  const double frac = a / h - static_cast<double>(node);
  const double scale = h * h * h / EI;
  auto add_nodal_force = [&](int64_t i, double f) {
    if (i >= 1 && i <= n - 2) rhs[static_cast<size_t>(i - 1)] += f * scale;
  };
  add_nodal_force(node, load.force * (1.0 - frac));
  add_nodal_force(node + 1, load.force * frac);

  // Banded Gaussian elimination; the system is symmetric positive
  // definite, so no pivoting is needed.
  for (int64_t k = 0; k < m; ++k) {
    const double pivot = band[static_cast<size_t>(k)][2];
    if (std::abs(pivot) < 1e-300)
      throw std::invalid_argument("beam_deflection_fd: singular system");
    for (int64_t r = k + 1; r <= std::min<int64_t>(k + 2, m - 1); ++r) {
      const int64_t off = r - k;  // 1 or 2
      const double factor = band[static_cast<size_t>(r)][2 - off] / pivot;
      if (factor == 0.0) continue;
      for (int64_t c = k; c <= std::min<int64_t>(k + 2, m - 1); ++c)
        band[static_cast<size_t>(r)][c - r + 2] -= factor * band[static_cast<size_t>(k)][c - k + 2];
      rhs[static_cast<size_t>(r)] -= factor * rhs[static_cast<size_t>(k)];
    }
  }
  for (int64_t k = m - 1; k >= 0; --k) {
    double v = rhs[static_cast<size_t>(k)];
    for (int64_t c = k + 1; c <= std::min<int64_t>(k + 2, m - 1); ++c)
      v -= band[static_cast<size_t>(k)][c - k + 2] * rhs[static_cast<size_t>(c)];
    rhs[static_cast<size_t>(k)] = v / band[static_cast<size_t>(k)][2];
  }

  std::vector<double> profile(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < m; ++i) profile[static_cast<size_t>(i + 1)] = rhs[static_cast<size_t>(i)];
  return profile;
}

// ------------------------------------------------------------ foam model

HeightField foam_indentation(const MaterialSpec& material, const PressurePatch& patch,
                             const HeightField& layout, double taper) {
  if (material.kind != MaterialKind::foam)
    throw std::invalid_argument("foam_indentation: material must be foam");
  material.validate();
  if (!(patch.pressure >= 0.0))
    throw std::invalid_argument("foam_indentation: pressure must be non-negative");
  if (patch.x1 < patch.x0 || patch.y1 < patch.y0)
    throw std::invalid_argument("foam_indentation: malformed footprint rectangle");
  if (!(taper > 0.0)) throw std::invalid_argument("foam_indentation: taper must be positive");

  HeightField out(layout.nx, layout.ny, layout.x0, layout.y0, layout.dx, layout.dy);
  const double full = patch.pressure / material.foundation_modulus;
  for (int64_t j = 0; j < layout.ny; ++j) {
    const double cy = layout.y0 + (static_cast<double>(j) + 0.5) * layout.dy;
    const double ey = std::max({patch.y0 - cy, 0.0, cy - patch.y1});
    for (int64_t i = 0; i < layout.nx; ++i) {
      const double cx = layout.x0 + (static_cast<double>(i) + 0.5) * layout.dx;
      const double ex = std::max({patch.x0 - cx, 0.0, cx - patch.x1});
      const double d = std::hypot(ex, ey);
      const double w = d >= taper ? 0.0 : full * (1.0 - d / taper);
      out.z[static_cast<size_t>(out.index(i, j))] = w;
    }
  }
  return out;
}

// -------------------------------------------------------------- sampling

namespace {

HeightField grid_layout(const GridSpec& spec) {
  return HeightField(spec.n, spec.n, spec.origin[0], spec.origin[1], spec.pitch, spec.pitch);
}

VoxelGrid shell_from_depth(const VoxelGrid& solid, const GridSpec& spec, const OrthoView& view) {
  return depth_to_grid(render_depth(solid, view), spec);
}

}  // namespace

Sample generate_sample(const BeamScene& scene, const LoadCase& load, const GridSpec& spec,
                       const OrthoView& view) {
  scene.beam.validate();
  load.validate();

  const BeamSpec& beam = scene.beam;
  const double cx = spec.origin[0] + static_cast<double>(spec.n) * spec.pitch / 2.0;
  const double cy = spec.origin[1] + static_cast<double>(spec.n) * spec.pitch / 2.0;
  const double bx0 = cx - beam.span / 2.0, bx1 = cx + beam.span / 2.0;
  const double by0 = cy - beam.width / 2.0, by1 = cy + beam.width / 2.0;

  HeightField undeformed = grid_layout(spec);
  HeightField deformed = grid_layout(spec);
  for (int64_t j = 0; j < spec.n; ++j) {
    const double ccy = undeformed.y0 + (static_cast<double>(j) + 0.5) * undeformed.dy;
    if (ccy < by0 || ccy > by1) continue;
    for (int64_t i = 0; i < spec.n; ++i) {
      const double ccx = undeformed.x0 + (static_cast<double>(i) + 0.5) * undeformed.dx;
      if (ccx < bx0 || ccx > bx1) continue;
      const size_t cell = static_cast<size_t>(undeformed.index(i, j));
      undeformed.z[cell] = scene.z_top;
      undeformed.support[cell] = beam.thickness;
      const double x_beam = std::clamp(ccx - bx0, 0.0, beam.span);
      deformed.z[cell] = scene.z_top - beam_deflection(beam, load, x_beam);
      deformed.support[cell] = beam.thickness;
    }
  }

  Sample s;
  s.input_grid = shell_from_depth(voxelize(undeformed, spec), spec, view);
  s.target_grid = voxelize(deformed, spec);
  s.condition = Condition{nearest_force_bin(load.force), nearest_location_bin(load.application_point),
                          beam.material.material_bin()};
  return s;
}

Sample generate_sample(const FoamScene& scene, const GridSpec& spec, const OrthoView& view) {
  if (!(scene.depth > 0.0))
    throw std::invalid_argument("generate_sample: foam slab depth must be positive");
  if (scene.material_bin < 0 || scene.material_bin >= kMaterialBins)
    throw std::invalid_argument("generate_sample: foam material bin outside codec range");

  HeightField undeformed = grid_layout(spec);
  for (size_t c = 0; c < undeformed.z.size(); ++c) {
    undeformed.z[c] = scene.surface_z;
    undeformed.support[c] = scene.depth;
  }
  const HeightField delta = foam_indentation(scene.material, scene.patch, undeformed, spec.pitch);

  const double bottom = scene.surface_z - scene.depth;
  HeightField deformed = undeformed;
  for (size_t c = 0; c < deformed.z.size(); ++c) {
    // Settle the surface; the slab bottom stays on rigid ground.
    const double z = std::max(scene.surface_z - delta.z[c], bottom);
    deformed.z[c] = z;
    deformed.support[c] = z - bottom;
  }

  const double area = (scene.patch.x1 - scene.patch.x0) * (scene.patch.y1 - scene.patch.y0);
  const double patch_cx = (scene.patch.x0 + scene.patch.x1) / 2.0;
  const double extent = static_cast<double>(spec.n) * spec.pitch;
  const double frac = std::clamp((patch_cx - spec.origin[0]) / extent, 0.0, 1.0);

  Sample s;
  s.input_grid = shell_from_depth(voxelize(undeformed, spec), spec, view);
  s.target_grid = voxelize(deformed, spec);
  s.condition = Condition{nearest_force_bin(scene.patch.pressure * area),
                          nearest_location_bin(frac), scene.material_bin};
  return s;
}

// --------------------------------------------------------------- dataset

MaterialSpec DatasetConfig::material_for_bin(int bin) const {
  if (bin == 0) return MaterialSpec::wood(wood_young_modulus);
  if (bin == 1) return MaterialSpec::aluminium(aluminium_young_modulus);
  throw std::invalid_argument("DatasetConfig: unknown material bin " + std::to_string(bin));
}

Dataset generate_dataset(const DatasetConfig& config) {
  if (config.force_levels[0] <= 0.0 || config.force_levels[1] <= 0.0)
    throw std::invalid_argument("generate_dataset: force levels must be positive");

  struct Case {
    double span;
    int force_bin, location_bin, material_bin;
  };
  std::vector<Case> cases;
  for (double span : config.spans) {
    const bool held_out =
        std::any_of(config.holdout_spans.begin(), config.holdout_spans.end(),
                    [&](double h) { return std::abs(span - h) < 1e-9; });
    if (held_out) continue;
    for (int f = 0; f < static_cast<int>(config.force_levels.size()); ++f)
      for (int l : config.location_bins)
        for (int m : config.material_bins) cases.push_back({span, f, l, m});
  }

  // Seeded subsample: partial Fisher-Yates over the index list, then sort
  // the chosen indices so enumeration order is preserved.
  std::vector<size_t> chosen(cases.size());
  for (size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (config.count > 0 && static_cast<size_t>(config.count) < cases.size()) {
    Prng rng(mix_seed(config.seed, fnv1a64("dataset-subsample", 17)));
    const size_t want = static_cast<size_t>(config.count);
    for (size_t i = 0; i < want; ++i) {
      const size_t j = i + static_cast<size_t>(rng.below(static_cast<uint64_t>(chosen.size() - i)));
      std::swap(chosen[i], chosen[j]);
    }
    chosen.resize(want);
    std::sort(chosen.begin(), chosen.end());
  }

  Dataset ds;
  ds.n = config.grid.n;
  ds.pitch = config.grid.pitch;
  for (size_t idx : chosen) {
    const Case& c = cases[idx];
    BeamScene scene;
    scene.beam.span = c.span;
    scene.beam.width = config.beam_width;
    scene.beam.thickness = config.beam_thickness;
    scene.beam.material = config.material_for_bin(c.material_bin);
    scene.z_top = config.z_top;
    LoadCase load;
    load.force = config.force_levels[static_cast<size_t>(c.force_bin)];
    load.application_point = location_fraction(c.location_bin);
    const Sample s = generate_sample(scene, load, config.grid, config.view);

    DatasetEntry e;
    e.condition = s.condition;
    e.input = s.input_grid.occ;
    e.target = s.target_grid.occ;
    e.span = c.span;
    e.force = load.force;
    e.location = load.application_point;
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

// ---------------------------------------------------------------- "DEFO"

namespace {

constexpr uint16_t kDefoVersion = 1;

void write_bytes(std::ofstream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error(std::string("load_dataset: truncated file while reading ") + what);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  if (ds.n < 1 || ds.n > 0xffff)
    throw std::invalid_argument("save_dataset: resolution outside the u16 header range");
  const size_t voxels = static_cast<size_t>(ds.n * ds.n * ds.n);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  const char magic[4] = {'D', 'E', 'F', 'O'};
  write_bytes(os, magic, 4);
  const uint16_t version = kDefoVersion;
  const uint16_t n16 = static_cast<uint16_t>(ds.n);
  const float pitch32 = static_cast<float>(ds.pitch);
  const uint32_t count = static_cast<uint32_t>(ds.entries.size());
  write_bytes(os, &version, 2);
  write_bytes(os, &n16, 2);
  write_bytes(os, &pitch32, 4);
  write_bytes(os, &count, 4);
  write_bytes(os, ds.cond_widths.data(), 3);

  for (const DatasetEntry& e : ds.entries) {
    e.condition.validate();
    if (e.input.size() != voxels || e.target.size() != voxels)
      throw std::invalid_argument("save_dataset: entry grid size does not match resolution");
    const uint8_t cond[3] = {static_cast<uint8_t>(e.condition.force_bin),
                             static_cast<uint8_t>(e.condition.location_bin),
                             static_cast<uint8_t>(e.condition.material_bin)};
    write_bytes(os, cond, 3);
    const std::vector<uint8_t> in_bits = pack_grid_bits(e.input, ds.n);
    const std::vector<uint8_t> tg_bits = pack_grid_bits(e.target, ds.n);
    write_bytes(os, in_bits.data(), in_bits.size());
    write_bytes(os, tg_bits.data(), tg_bits.size());
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for " + path);

  nlohmann::json manifest;
  manifest["n"] = ds.n;
  manifest["pitch"] = ds.pitch;
  manifest["sample_count"] = ds.entries.size();
  manifest["condition_widths"] = {ds.cond_widths[0], ds.cond_widths[1], ds.cond_widths[2]};
  nlohmann::json samples = nlohmann::json::array();
  for (size_t i = 0; i < ds.entries.size(); ++i) {
    const DatasetEntry& e = ds.entries[i];
    samples.push_back({{"index", i},
                       {"condition", {e.condition.force_bin, e.condition.location_bin,
                                      e.condition.material_bin}},
                       {"span", e.span},
                       {"force", e.force},
                       {"location", e.location}});
  }
  manifest["samples"] = std::move(samples);
  std::ofstream ms(path + ".json");
  if (!ms) throw std::runtime_error("save_dataset: cannot open " + path + ".json");
  ms << manifest.dump(2) << "\n";
  if (!ms) throw std::runtime_error("save_dataset: write failed for " + path + ".json");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "DEFO", 4) != 0)
    throw std::runtime_error("load_dataset: bad magic in " + path);
  uint16_t version = 0, n16 = 0;
  float pitch32 = 0.0f;
  uint32_t count = 0;
  read_bytes(is, &version, 2, "version");
  read_bytes(is, &n16, 2, "resolution");
  read_bytes(is, &pitch32, 4, "pitch");
  read_bytes(is, &count, 4, "sample count");
  if (version != kDefoVersion)
    throw std::runtime_error("load_dataset: unsupported version " + std::to_string(version));

  Dataset ds;
  ds.n = static_cast<int64_t>(n16);
  ds.pitch = static_cast<double>(pitch32);
  read_bytes(is, ds.cond_widths.data(), 3, "condition widths");
  if (ds.cond_widths[0] != kForceBins || ds.cond_widths[1] != kLocationBins ||
      ds.cond_widths[2] != kMaterialBins)
    throw std::runtime_error("load_dataset: condition widths do not match the codec");

  std::vector<uint8_t> payload(packed_grid_bytes(ds.n));
  ds.entries.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    DatasetEntry& e = ds.entries[i];
    uint8_t cond[3];
    read_bytes(is, cond, 3, "condition");
    e.condition = Condition{cond[0], cond[1], cond[2]};
    e.condition.validate();
    read_bytes(is, payload.data(), payload.size(), "input grid");
    unpack_grid_bits(payload.data(), ds.n, e.input);
    read_bytes(is, payload.data(), payload.size(), "target grid");
    unpack_grid_bits(payload.data(), ds.n, e.target);
  }

  // The binary container is self-sufficient; the manifest sidecar, when it is
  // still next to the file, restores the per-sample provenance fields.
  std::ifstream ms(path + ".json");
  if (ms) {
    nlohmann::json manifest;
    try {
      ms >> manifest;
    } catch (const nlohmann::json::parse_error&) {
      return ds;  // damaged sidecar: keep the binary payload, drop provenance
    }
    if (manifest.contains("samples") && manifest["samples"].is_array() &&
        manifest["samples"].size() == ds.entries.size()) {
      for (size_t i = 0; i < ds.entries.size(); ++i) {
        const nlohmann::json& s = manifest["samples"][i];
        ds.entries[i].span = s.value("span", 0.0);
        ds.entries[i].force = s.value("force", 0.0);
        ds.entries[i].location = s.value("location", 0.0);
      }
    }
  }
  return ds;
}

}  // namespace flexvox
