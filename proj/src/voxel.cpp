// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flexvox {

namespace {

bool power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

void check_spec(const GridSpec& spec, const char* who) {
  if (!power_of_two(spec.n) || spec.n < 8)
    throw std::invalid_argument(std::string(who) + ": grid resolution must be a power of two >= 8, got " +
                                std::to_string(spec.n));
  if (!(spec.pitch > 0.0))
    throw std::invalid_argument(std::string(who) + ": grid pitch must be positive");
}

}  // namespace

VoxelGrid::VoxelGrid(int64_t n_, double pitch_, std::array<double, 3> origin_)
    : n(n_), pitch(pitch_), origin(origin_) {
  check_spec(GridSpec{n, pitch, origin}, "VoxelGrid");
  occ.assign(static_cast<size_t>(n * n * n), 0);
}

int64_t VoxelGrid::count() const {
  int64_t c = 0;
  for (uint8_t v : occ) c += v;
  return c;
}

void VoxelGrid::validate() const {
  check_spec(GridSpec{n, pitch, origin}, "VoxelGrid");
  if (occ.size() != static_cast<size_t>(n * n * n))
    throw std::invalid_argument("VoxelGrid: occupancy size " + std::to_string(occ.size()) +
                                " does not match resolution " + std::to_string(n));
  for (uint8_t v : occ)
    if (v > 1)
      throw std::invalid_argument("VoxelGrid: occupancy must hold only 0 or 1, found " +
                                  std::to_string(static_cast<int>(v)));
}

HeightField::HeightField(int64_t nx_, int64_t ny_, double x0_, double y0_, double dx_,
                         double dy_)
    : nx(nx_), ny(ny_), x0(x0_), y0(y0_), dx(dx_), dy(dy_) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("HeightField: grid must be at least 1x1");
  if (!(dx > 0.0) || !(dy > 0.0))
    throw std::invalid_argument("HeightField: cell size must be positive");
  z.assign(static_cast<size_t>(nx * ny), 0.0);
  support.assign(static_cast<size_t>(nx * ny), 0.0);
}

VoxelGrid voxelize(const HeightField& hf, const GridSpec& spec) {
  check_spec(spec, "voxelize");
  if (hf.nx < 1 || hf.ny < 1 || !(hf.dx > 0.0) || !(hf.dy > 0.0))
    throw std::invalid_argument("voxelize: malformed height field");

  const double gx0 = spec.origin[0], gx1 = spec.origin[0] + spec.n * spec.pitch;
  const double gy0 = spec.origin[1], gy1 = spec.origin[1] + spec.n * spec.pitch;
  const double gz0 = spec.origin[2], gz1 = spec.origin[2] + spec.n * spec.pitch;
  const double slack = 1e-9 * spec.pitch;

  if (hf.x0 < gx0 - slack || hf.x0 + hf.nx * hf.dx > gx1 + slack)
    throw std::invalid_argument("voxelize: height field exceeds grid bounds on axis x");
  if (hf.y0 < gy0 - slack || hf.y0 + hf.ny * hf.dy > gy1 + slack)
    throw std::invalid_argument("voxelize: height field exceeds grid bounds on axis y");
  bool any_solid = false;
  double zmin = 0.0, zmax = 0.0;
  for (int64_t c = 0; c < hf.nx * hf.ny; ++c) {
    const double t = hf.support[static_cast<size_t>(c)];
    if (!(t > 0.0)) continue;
    const double top = hf.z[static_cast<size_t>(c)];
    if (!any_solid) {
      zmin = top - t;
      zmax = top;
      any_solid = true;
    } else {
      zmin = std::min(zmin, top - t);
      zmax = std::max(zmax, top);
    }
  }
  if (any_solid && (zmin < gz0 - slack || zmax > gz1 + slack))
    throw std::invalid_argument("voxelize: height field exceeds grid bounds on axis z");

  VoxelGrid grid(spec.n, spec.pitch, spec.origin);
  if (!any_solid) return grid;

  for (int64_t j = 0; j < spec.n; ++j) {
    const double cy = spec.origin[1] + (static_cast<double>(j) + 0.5) * spec.pitch;
    const int64_t cj = static_cast<int64_t>(std::floor((cy - hf.y0) / hf.dy));
    if (cj < 0 || cj >= hf.ny) continue;
    for (int64_t i = 0; i < spec.n; ++i) {
      const double cx = spec.origin[0] + (static_cast<double>(i) + 0.5) * spec.pitch;
      const int64_t ci = static_cast<int64_t>(std::floor((cx - hf.x0) / hf.dx));
      if (ci < 0 || ci >= hf.nx) continue;
      const size_t cell = static_cast<size_t>(hf.index(ci, cj));
      const double t = hf.support[cell];
      if (!(t > 0.0)) continue;
      const double top = hf.z[cell];
      const double bot = top - t;
      // Occupied z layers: positive-measure overlap with [bot, top].
      int64_t k_lo = static_cast<int64_t>(std::floor((bot - spec.origin[2]) / spec.pitch));
      int64_t k_hi = static_cast<int64_t>(std::floor((top - spec.origin[2]) / spec.pitch)) + 1;
      k_lo = std::max<int64_t>(k_lo, 0);
      k_hi = std::min<int64_t>(k_hi, spec.n - 1);
      for (int64_t k = k_lo; k <= k_hi; ++k) {
        const double vz0 = spec.origin[2] + static_cast<double>(k) * spec.pitch;
        const double vz1 = vz0 + spec.pitch;
        const double overlap = std::min(top, vz1) - std::max(bot, vz0);
        if (overlap > slack) grid.set(i, j, k, true);
      }
    }
  }
  return grid;
}

namespace {

// The two image axes for a view are the non-view axes in (x,y,z) order.
void image_axes(int axis, int& ua, int& va) {
  switch (axis) {
    case 0: ua = 1; va = 2; break;
    case 1: ua = 0; va = 2; break;
    case 2: ua = 0; va = 1; break;
    default: throw std::invalid_argument("render_depth: view axis must be 0, 1 or 2");
  }
}

}  // namespace

DepthImage render_depth(const VoxelGrid& grid, const OrthoView& view) {
  grid.validate();
  if (view.sign != 1 && view.sign != -1)
    throw std::invalid_argument("render_depth: view sign must be +1 or -1");
  int ua, va;
  image_axes(view.axis, ua, va);

  DepthImage img;
  img.width = grid.n;
  img.height = grid.n;
  img.view = view;
  img.pixel_pitch = grid.pitch;
  img.grid_origin = grid.origin;
  img.grid_n = grid.n;
  img.depth.assign(static_cast<size_t>(grid.n * grid.n), kDepthNoHit);

  const int64_t n = grid.n;
  for (int64_t v = 0; v < n; ++v)
    for (int64_t u = 0; u < n; ++u) {
      int64_t idx[3];
      idx[ua] = u;
      idx[va] = v;
      for (int64_t t = 0; t < n; ++t) {
        idx[view.axis] = view.sign > 0 ? t : n - 1 - t;
        if (grid.at(idx[0], idx[1], idx[2])) {
          img.depth[static_cast<size_t>(v * n + u)] =
              static_cast<float>(static_cast<double>(t) * grid.pitch);
          break;
        }
      }
    }
  return img;
}

VoxelGrid depth_to_grid(const DepthImage& img, const GridSpec& spec) {
  check_spec(spec, "depth_to_grid");
  const double tol = 1e-9 * spec.pitch;
  if (img.grid_n != spec.n || img.width != spec.n || img.height != spec.n)
    throw std::invalid_argument("depth_to_grid: image extent (n=" + std::to_string(img.grid_n) +
                                ") inconsistent with grid resolution " + std::to_string(spec.n));
  if (std::abs(img.pixel_pitch - spec.pitch) > tol)
    throw std::invalid_argument("depth_to_grid: image pixel pitch inconsistent with grid pitch");
  for (int a = 0; a < 3; ++a)
    if (std::abs(img.grid_origin[static_cast<size_t>(a)] - spec.origin[static_cast<size_t>(a)]) > tol)
      throw std::invalid_argument("depth_to_grid: image origin inconsistent with grid origin");

  int ua, va;
  image_axes(img.view.axis, ua, va);
  VoxelGrid grid(spec.n, spec.pitch, spec.origin);
  const int64_t n = spec.n;
  for (int64_t v = 0; v < n; ++v)
    for (int64_t u = 0; u < n; ++u) {
      const float d = img.at(u, v);
      if (!std::isfinite(d)) continue;
      if (d < 0.0f)
        throw std::invalid_argument("depth_to_grid: negative depth at pixel (" +
                                    std::to_string(u) + "," + std::to_string(v) + ")");
      // Slot along the view axis; 1e-5 absorbs the f32 rounding of rendered
      // depths without swallowing real sub-voxel offsets.
      const int64_t t =
          static_cast<int64_t>(std::floor(static_cast<double>(d) / spec.pitch + 1e-5));
      if (t < 0 || t >= n)
        throw std::invalid_argument("depth_to_grid: depth " + std::to_string(d) +
                                    " outside the grid at pixel (" + std::to_string(u) + "," +
                                    std::to_string(v) + ")");
      int64_t idx[3];
      idx[ua] = u;
      idx[va] = v;
      idx[img.view.axis] = img.view.sign > 0 ? t : n - 1 - t;
      grid.set(idx[0], idx[1], idx[2], true);
    }
  return grid;
}

GridMetrics grid_metrics(const VoxelGrid& pred, const VoxelGrid& truth) {
  if (pred.n != truth.n)
    throw std::invalid_argument("grid_metrics: resolution mismatch (" + std::to_string(pred.n) +
                                " vs " + std::to_string(truth.n) + ")");
  // Relative tolerance: grids loaded from files carry an f32-rounded pitch.
  if (std::abs(pred.pitch - truth.pitch) > 1e-6 * std::max(pred.pitch, truth.pitch))
    throw std::invalid_argument("grid_metrics: pitch mismatch");

  GridMetrics m;
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.occ.size(); ++i) {
    const bool a = pred.occ[i] != 0, b = truth.occ[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);

  const int64_t n = pred.n;
  double sq_sum_cm2 = 0.0;
  for (int64_t j = 0; j < n; ++j)
    for (int64_t i = 0; i < n; ++i) {
      int64_t kp = -1, kt = -1;
      for (int64_t k = 0; k < n; ++k) {
        if (kp < 0 && pred.at(i, j, k)) kp = k;
        if (kt < 0 && truth.at(i, j, k)) kt = k;
        if (kp >= 0 && kt >= 0) break;
      }
      const bool hp = kp >= 0, ht = kt >= 0;
      if (hp && ht) {
        const int64_t err = std::abs(kp - kt);
        m.max_deflection_error_voxels = std::max(m.max_deflection_error_voxels, err);
        const double err_cm = static_cast<double>(err) * pred.pitch * 100.0;
        sq_sum_cm2 += err_cm * err_cm;
        ++m.columns_compared;
      } else if (hp != ht) {
        ++m.columns_missing;
      }
    }
  m.rmse_deflection_cm =
      m.columns_compared > 0 ? std::sqrt(sq_sum_cm2 / static_cast<double>(m.columns_compared)) : 0.0;
  return m;
}

// --------------------------------------------------------------- file IO

namespace {

constexpr uint16_t kVoxgVersion = 1;

void write_bytes(std::ofstream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error(std::string("load_voxg: truncated file while reading ") + what);
}

}  // namespace

size_t packed_grid_bytes(int64_t n) {
  return static_cast<size_t>(n) * static_cast<size_t>((n * n + 7) / 8);
}

std::vector<uint8_t> pack_grid_bits(const std::vector<uint8_t>& occ, int64_t n) {
  if (occ.size() != static_cast<size_t>(n * n * n))
    throw std::invalid_argument("pack_grid_bits: occupancy size does not match resolution");
  const size_t slice_bytes = static_cast<size_t>((n * n + 7) / 8);
  std::vector<uint8_t> out(packed_grid_bytes(n), 0);
  for (int64_t k = 0; k < n; ++k) {
    uint8_t* slice = out.data() + static_cast<size_t>(k) * slice_bytes;
    for (int64_t b = 0; b < n * n; ++b)  // b = j*n + i, x-fastest
      if (occ[static_cast<size_t>(k * n * n + b)])
        slice[b >> 3] |= static_cast<uint8_t>(1u << (b & 7));
  }
  return out;
}

void unpack_grid_bits(const uint8_t* bytes, int64_t n, std::vector<uint8_t>& occ) {
  const size_t slice_bytes = static_cast<size_t>((n * n + 7) / 8);
  occ.assign(static_cast<size_t>(n * n * n), 0);
  for (int64_t k = 0; k < n; ++k) {
    const uint8_t* slice = bytes + static_cast<size_t>(k) * slice_bytes;
    for (int64_t b = 0; b < n * n; ++b)
      occ[static_cast<size_t>(k * n * n + b)] = (slice[b >> 3] >> (b & 7)) & 1u;
  }
}

void save_voxg(const VoxelGrid& grid, const std::string& path) {
  grid.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_voxg: cannot open " + path);
  const char magic[4] = {'V', 'O', 'X', 'G'};
  write_bytes(os, magic, 4);
  const uint16_t version = kVoxgVersion;
  const uint16_t n16 = static_cast<uint16_t>(grid.n);
  const float pitch32 = static_cast<float>(grid.pitch);
  const uint32_t reserved = 0;
  write_bytes(os, &version, 2);
  write_bytes(os, &n16, 2);
  write_bytes(os, &pitch32, 4);
  write_bytes(os, &reserved, 4);

  const std::vector<uint8_t> payload = pack_grid_bits(grid.occ, grid.n);
  write_bytes(os, payload.data(), payload.size());
  if (!os) throw std::runtime_error("save_voxg: write failed for " + path);
}

VoxelGrid load_voxg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_voxg: cannot open " + path);
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "VOXG", 4) != 0)
    throw std::runtime_error("load_voxg: bad magic in " + path);
  uint16_t version = 0, n16 = 0;
  float pitch32 = 0.0f;
  uint32_t reserved = 0;
  read_bytes(is, &version, 2, "version");
  read_bytes(is, &n16, 2, "resolution");
  read_bytes(is, &pitch32, 4, "pitch");
  read_bytes(is, &reserved, 4, "reserved");
  if (version != kVoxgVersion)
    throw std::runtime_error("load_voxg: unsupported version " + std::to_string(version));

  VoxelGrid grid(static_cast<int64_t>(n16), static_cast<double>(pitch32));
  std::vector<uint8_t> payload(packed_grid_bytes(grid.n));
  read_bytes(is, payload.data(), payload.size(), "voxel data");
  unpack_grid_bits(payload.data(), grid.n, grid.occ);
  return grid;
}

std::vector<float> grid_as_floats(const VoxelGrid& grid) {
  std::vector<float> out(grid.occ.size());
  for (size_t i = 0; i < grid.occ.size(); ++i) out[i] = grid.occ[i] ? 1.0f : 0.0f;
  return out;
}

VoxelGrid grid_from_floats(const std::vector<float>& data, const GridSpec& spec,
                           float threshold) {
  check_spec(spec, "grid_from_floats");
  if (data.size() != static_cast<size_t>(spec.n * spec.n * spec.n))
    throw std::invalid_argument("grid_from_floats: data size " + std::to_string(data.size()) +
                                " does not match resolution " + std::to_string(spec.n));
  VoxelGrid grid(spec.n, spec.pitch, spec.origin);
  for (size_t i = 0; i < data.size(); ++i) grid.occ[i] = data[i] > threshold ? 1 : 0;
  return grid;
}

}  // namespace flexvox
