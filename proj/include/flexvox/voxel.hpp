// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace flexvox {

// Binary occupancy grid of n^3 voxels. Storage is x-fastest, then y, then
// z: occ[(k*n + j)*n + i] is voxel (i,j,k). Voxel (i,j,k) covers the world
// box origin + [i,i+1)x[j,j+1)x[k,k+1) * pitch, with +z up.
struct VoxelGrid {
  int64_t n = 0;
  double pitch = 0.022;
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<uint8_t> occ;

  VoxelGrid() = default;
  VoxelGrid(int64_t n_, double pitch_, std::array<double, 3> origin_ = {0.0, 0.0, 0.0});

  int64_t index(int64_t i, int64_t j, int64_t k) const { return (k * n + j) * n + i; }
  uint8_t at(int64_t i, int64_t j, int64_t k) const {
    return occ[static_cast<size_t>(index(i, j, k))];
  }
  void set(int64_t i, int64_t j, int64_t k, bool value) {
    occ[static_cast<size_t>(index(i, j, k))] = value ? 1 : 0;
  }
  int64_t count() const;

  // Enforces the type invariants: n a power of two >= 8, pitch > 0,
  // occupancy of size n^3 holding only 0/1.
  void validate() const;
};

// Grid placement passed to the rasterizing operations.
struct GridSpec {
  int64_t n = 64;
  double pitch = 0.022;
  std::array<double, 3> origin{0.0, 0.0, 0.0};
};

// Regular 2-D field of surface heights z(x,y) with per-cell material
// thickness below the surface. Cell (i,j) covers world rectangle
// [x0+i*dx, x0+(i+1)*dx) x [y0+j*dy, y0+(j+1)*dy); storage x-fastest.
struct HeightField {
  int64_t nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0;
  double dx = 0.0, dy = 0.0;
  std::vector<double> z;        // surface height (meters)
  std::vector<double> support;  // solid thickness below z (meters)

  HeightField() = default;
  HeightField(int64_t nx_, int64_t ny_, double x0_, double y0_, double dx_, double dy_);

  int64_t index(int64_t i, int64_t j) const { return j * nx + i; }
};

// Axis-aligned orthographic view: rays travel along +axis (sign=+1) or
// -axis (sign=-1). axis: 0=x, 1=y, 2=z.
struct OrthoView {
  int axis = 1;
  int sign = 1;
};

inline constexpr float kDepthNoHit = std::numeric_limits<float>::infinity();

// Orthographic depth image, one pixel per voxel column of the grid it was
// rendered against. Pixel (u,v) at depth[v*width + u]; u and v run over
// the two non-view axes in (x,y,z) order. Depth is the distance from the
// ray's entry face of the grid to the first occupied voxel; kDepthNoHit
// where the ray exits unobstructed.
struct DepthImage {
  int64_t width = 0, height = 0;
  OrthoView view{};
  double pixel_pitch = 0.0;
  std::array<double, 3> grid_origin{0.0, 0.0, 0.0};
  int64_t grid_n = 0;
  std::vector<float> depth;

  float at(int64_t u, int64_t v) const { return depth[static_cast<size_t>(v * width + u)]; }
};

struct GridMetrics {
  double iou = 0.0;
  int64_t max_deflection_error_voxels = 0;
  double rmse_deflection_cm = 0.0;
  int64_t columns_compared = 0;  // columns occupied in both grids
  int64_t columns_missing = 0;   // columns occupied in exactly one grid
};

// Rasterize a height field into a voxel grid. A voxel is occupied when its
// column center lies over a field cell and the voxel's z interval overlaps
// the solid slab [z - support, z] with positive measure.
VoxelGrid voxelize(const HeightField& hf, const GridSpec& spec);

// Cast one ray per voxel column along the view axis.
DepthImage render_depth(const VoxelGrid& grid, const OrthoView& view);

// Mark exactly the voxel pierced at each finite pixel depth (2.5-D shell).
VoxelGrid depth_to_grid(const DepthImage& img, const GridSpec& spec);

GridMetrics grid_metrics(const VoxelGrid& pred, const VoxelGrid& truth);

// Bit-packed occupancy payload shared by the grid and dataset containers:
// one bit per voxel, x-fastest then y then z, each z-slice padded to whole
// bytes, LSB-first within a byte.
size_t packed_grid_bytes(int64_t n);
std::vector<uint8_t> pack_grid_bits(const std::vector<uint8_t>& occ, int64_t n);
void unpack_grid_bits(const uint8_t* bytes, int64_t n, std::vector<uint8_t>& occ);

// Bit-packed grid file ("VOXG"): 16-byte header, then the packed payload.
// The file stores no origin; load_voxg returns origin (0,0,0).
void save_voxg(const VoxelGrid& grid, const std::string& path);
VoxelGrid load_voxg(const std::string& path);

// Occupancy as floats in the tensor layout [z,y,x] (identical flat order).
std::vector<float> grid_as_floats(const VoxelGrid& grid);
VoxelGrid grid_from_floats(const std::vector<float>& data, const GridSpec& spec,
                           float threshold = 0.5f);

}  // namespace flexvox
