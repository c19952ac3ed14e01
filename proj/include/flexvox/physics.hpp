// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flexvox/condition.hpp"
#include "flexvox/voxel.hpp"

namespace flexvox {

enum class MaterialKind { wood, aluminium, foam };

struct MaterialSpec {
  MaterialKind kind = MaterialKind::wood;
  double young_modulus = 0.0;       // Pa
  double foundation_modulus = 0.0;  // Pa/m, foam only

  // Handbook defaults; calibration knobs, not ground truth.
  static MaterialSpec wood(double young_modulus = 9e9);
  static MaterialSpec aluminium(double young_modulus = 69e9);
  static MaterialSpec foam(double foundation_modulus = 1e5);

  // Condition material bin: wood = 0, aluminium = 1 (enum order).
  int material_bin() const;
  void validate() const;
};

// Simply-supported rectangular-section beam.
struct BeamSpec {
  double span = 1.0;        // m
  double width = 0.15;      // m
  double thickness = 0.006;  // m
  MaterialSpec material = MaterialSpec::wood();

  double inertia() const { return width * thickness * thickness * thickness / 12.0; }
  void validate() const;
};

struct LoadCase {
  double force = 0.0;              // N, downward
  double application_point = 0.5;  // fraction of span in (0,1)
  double patch_width = 0.0;        // m; 0 = point load
  void validate() const;
};

// Condition bin levels used when quantizing loads and when enumerating
// datasets. Force levels follow from a 6.3 kg robot with a 5 kg payload
// at g = 9.81; locations are the 7 uniform span fractions 1/8 .. 7/8.
inline constexpr std::array<double, 2> kDefaultForceLevels{61.8, 110.8};

double location_fraction(int location_bin);  // (bin+1)/8
int nearest_force_bin(double force, const std::array<double, 2>& levels = kDefaultForceLevels);
int nearest_location_bin(double fraction);

// Closed-form Euler-Bernoulli deflection (m, downward positive) of a
// simply-supported beam under a point load, evaluated at x from the left
// support. Rejects x outside [0, span] and patch loads.
double beam_deflection(const BeamSpec& beam, const LoadCase& load, double x);

// Location and value of the maximum deflection (closed form).
struct BeamMax {
  double x = 0.0;
  double deflection = 0.0;
};
BeamMax beam_max_deflection(const BeamSpec& beam, const LoadCase& load);

// Independent verification oracle: solves E*I*w'''' = q with w = w'' = 0 at
// both supports on n_nodes uniform nodes by a pentadiagonal finite-
// difference system. Returns the full profile including the end nodes.
std::vector<double> beam_deflection_fd(const BeamSpec& beam, const LoadCase& load,
                                       int64_t n_nodes);

// Uniform-pressure footprint on a Winkler foundation.
struct PressurePatch {
  double pressure = 0.0;  // Pa
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // footprint rectangle (m)
};

// Settlement field w = pressure / foundation_modulus inside the footprint,
// zero outside, linearly tapered over `taper` meters (one voxel pitch) of
// Euclidean distance from the rectangle. Sampled on layout's cells; the
// returned field's z holds the settlement depth (positive down).
HeightField foam_indentation(const MaterialSpec& material, const PressurePatch& patch,
                             const HeightField& layout, double taper);

// One training example: undeformed shell as seen by the depth camera, the
// binned condition, and the deformed solid.
struct Sample {
  VoxelGrid input_grid;
  Condition condition;
  VoxelGrid target_grid;
};

// Beam scene placed in a grid: the beam runs along x, centered in x and y,
// with its undeformed top surface at world z = z_top.
struct BeamScene {
  BeamSpec beam;
  double z_top = 0.0;
};

Sample generate_sample(const BeamScene& scene, const LoadCase& load, const GridSpec& spec,
                       const OrthoView& view);

// Foam scene: a foam slab fills the grid footprint with its surface at
// surface_z and rigid ground depth below; the patch indents it.
struct FoamScene {
  MaterialSpec material = MaterialSpec::foam();
  PressurePatch patch;
  double surface_z = 0.0;
  double depth = 0.0;       // slab thickness, m
  int material_bin = 0;     // condition material bin for foam datasets
};

Sample generate_sample(const FoamScene& scene, const GridSpec& spec, const OrthoView& view);

// Dataset generation: the cross product of spans x force bins x location
// bins x materials, minus held-out spans, optionally subsampled.
struct DatasetConfig {
  std::vector<double> spans{0.8, 0.9, 1.0, 1.05, 1.1, 1.2, 1.3};  // 7 lengths
  std::vector<double> holdout_spans;                              // excluded exactly
  std::array<double, 2> force_levels = kDefaultForceLevels;
  std::vector<int> location_bins{0, 1, 2, 3, 4, 5, 6};
  std::vector<int> material_bins{0, 1};
  double beam_width = 0.15;
  double beam_thickness = 0.006;
  double wood_young_modulus = 9e9;
  double aluminium_young_modulus = 69e9;
  // The undeformed top surface (z_top = 0) sits two voxel layers below the
  // grid top, leaving ~1.36 m of downward headroom for deflections.
  GridSpec grid{64, 0.022, {0.0, 0.0, -62 * 0.022}};
  OrthoView view{1, 1};
  double z_top = 0.0;      // undeformed top surface (world z)
  int64_t count = 0;       // 0 = full cross product, else seeded subsample
  uint64_t seed = 0;

  MaterialSpec material_for_bin(int bin) const;
};

struct DatasetEntry {
  Condition condition;
  std::vector<uint8_t> input;   // n^3 occupancy, voxel-core flat order
  std::vector<uint8_t> target;
  // Provenance, recorded in the manifest sidecar.
  double span = 0.0;
  double force = 0.0;
  double location = 0.0;  // fraction of span
};

struct Dataset {
  int64_t n = 0;
  double pitch = 0.0;
  std::array<uint8_t, 3> cond_widths{kForceBins, kLocationBins, kMaterialBins};
  std::vector<DatasetEntry> entries;
};

Dataset generate_dataset(const DatasetConfig& config);

// "DEFO" container: 19-byte header (magic, version u16, N u16, pitch f32,
// sample_count u32, cond widths u8x3), then per sample the three condition
// indices and the two bit-packed grids (voxel-core packing). Little-endian.
// save_dataset also writes a JSON manifest sidecar at path + ".json".
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace flexvox
