// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace flexvox::kernels {

namespace {

bool g_parallel = true;

struct LoopRange {
  int64_t lo, hi;  // inclusive; empty when lo > hi
};

// Output positions q for which q*stride + kk - pad_lo lands inside [0, in_sz).
inline LoopRange conv_range(int64_t kk, int64_t in_sz, int64_t out_sz, int64_t s,
                            int64_t pad_lo) {
  int64_t lo_num = pad_lo - kk;
  int64_t lo = lo_num > 0 ? (lo_num + s - 1) / s : 0;
  int64_t hi_num = in_sz - 1 - kk + pad_lo;
  int64_t hi = hi_num < 0 ? -1 : hi_num / s;
  return {lo, std::min(hi, out_sz - 1)};
}

inline void axpy(float* __restrict y, float a, const float* __restrict x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Partial-sum lane count shared by the lane-structured reductions below.
// 32 lanes give the vectorizer several independent accumulator chains.
constexpr int kLanes = 32;

// Combine the lanes with a fixed pairwise tree: 32 -> 16 -> 8 -> 4 -> 2 -> 1.
inline float lanes_tree(const float* lanes) {
  float t[kLanes];
  for (int j = 0; j < kLanes; ++j) t[j] = lanes[j];
  for (int w = kLanes / 2; w >= 1; w /= 2)
    for (int j = 0; j < w; ++j) t[j] = t[j] + t[j + w];
  return t[0];
}

// Lane-structured dot product: element i lands in lane i%32, so the
// summation order is independent of the caller and of vectorization; the
// lanes are combined once with the fixed tree. Noinline so every caller
// (serial or OpenMP) executes the same machine code, keeping results
// bitwise identical.
__attribute__((noinline)) float dot_lanes(const float* __restrict a,
                                          const float* __restrict b, int64_t n) {
  float s[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int j = 0; j < kLanes; ++j) s[j] += a[i + j] * b[i + j];
  for (int j = 0; i < n; ++i, ++j) s[j] += a[i] * b[i];
  return lanes_tree(s);
}

}  // namespace

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

void Conv3dGeom::validate() const {
  if (batch < 1 || cin < 1 || cout < 1) throw std::invalid_argument("conv3d: bad channel/batch geometry");
  if (in_d < 1 || in_h < 1 || in_w < 1) throw std::invalid_argument("conv3d: bad input size");
  if (k < 1 || stride < 1 || pad_lo < 0 || pad_hi < 0) throw std::invalid_argument("conv3d: bad kernel/stride/pad");
  if (out_d() < 1 || out_h() < 1 || out_w() < 1) throw std::invalid_argument("conv3d: empty output");
}

// ---------------------------------------------------------------- conv fwd

// Both variants accumulate each output element over the flattened filter
// taps r = (ci, kz, ky, kx) in ascending order, one fused term at a time.
// The serial nest skips out-of-bounds taps; the GEMM path multiplies them
// by packed zeros, which leaves every finite partial sum bit-identical.

void conv3d_fwd_serial(const float* x, const float* w, float* y, const Conv3dGeom& g) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t k3 = g.k * g.k * g.k;
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t o = 0; o < g.cout; ++o)
      for (int64_t zo = 0; zo < Do; ++zo)
        for (int64_t yo = 0; yo < Ho; ++yo)
          for (int64_t xo = 0; xo < Wo; ++xo) {
            float acc = 0.0f;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const float* xp = x + (b * g.cin + ci) * g.in_d * g.in_h * g.in_w;
              const float* wp = w + (o * g.cin + ci) * k3;
              for (int64_t kz = 0; kz < g.k; ++kz) {
                int64_t zi = zo * g.stride + kz - g.pad_lo;
                if (zi < 0 || zi >= g.in_d) continue;
                for (int64_t ky = 0; ky < g.k; ++ky) {
                  int64_t yi = yo * g.stride + ky - g.pad_lo;
                  if (yi < 0 || yi >= g.in_h) continue;
                  for (int64_t kx = 0; kx < g.k; ++kx) {
                    int64_t xi = xo * g.stride + kx - g.pad_lo;
                    if (xi < 0 || xi >= g.in_w) continue;
                    acc += wp[(kz * g.k + ky) * g.k + kx] * xp[(zi * g.in_h + yi) * g.in_w + xi];
                  }
                }
              }
            }
            y[(((b * g.cout + o) * Do + zo) * Ho + yo) * Wo + xo] = acc;
          }
}

void conv3d_fwd_omp(const float* x, const float* w, float* y, const Conv3dGeom& g) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t in_vol = g.in_d * g.in_h * g.in_w;
  const int64_t out_vol = Do * Ho * Wo, slice = Ho * Wo;
  const int64_t k3 = g.k * g.k * g.k, R = g.cin * k3, s = g.stride;
  // Process whole zo-slices per packed block, capping the scratch near 8 MB.
  const int64_t zchunk =
      std::clamp<int64_t>(static_cast<int64_t>(8u << 20) / (4 * R * slice), 1, Do);
  const int64_t nchunks = (Do + zchunk - 1) / zchunk;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t c = 0; c < nchunks; ++c) {
      const int64_t zo0 = c * zchunk, nz = std::min(zchunk, Do - zo0), P = nz * slice;
      const float* xb = x + b * g.cin * in_vol;
      std::vector<float> col(static_cast<size_t>(R * P));
      // Pack the input patches: row r holds tap (ci, kz, ky, kx) for every
      // output position of the chunk, zero where the tap falls outside.
      for (int64_t r = 0; r < R; ++r) {
        float* row = col.data() + r * P;
        std::fill(row, row + P, 0.0f);
        const int64_t ci = r / k3, rem = r % k3;
        const int64_t kz = rem / (g.k * g.k), ky = (rem / g.k) % g.k, kx = rem % g.k;
        const LoopRange yr = conv_range(ky, g.in_h, Ho, s, g.pad_lo);
        const LoopRange xr = conv_range(kx, g.in_w, Wo, s, g.pad_lo);
        if (xr.lo > xr.hi || yr.lo > yr.hi) continue;
        const int64_t nx = xr.hi - xr.lo + 1;
        const float* xc = xb + ci * in_vol;
        for (int64_t zo = zo0; zo < zo0 + nz; ++zo) {
          const int64_t zi = zo * s + kz - g.pad_lo;
          if (zi < 0 || zi >= g.in_d) continue;
          for (int64_t yo = yr.lo; yo <= yr.hi; ++yo) {
            const int64_t yi = yo * s + ky - g.pad_lo;
            const float* src = xc + (zi * g.in_h + yi) * g.in_w + xr.lo * s + kx - g.pad_lo;
            float* dst = row + ((zo - zo0) * Ho + yo) * Wo + xr.lo;
            if (s == 1)
              std::copy(src, src + nx, dst);
            else
              for (int64_t i = 0; i < nx; ++i) dst[i] = src[i * s];
          }
        }
      }
      // y[b, o, chunk] = W[o, :] * col, four output channels per pass.
      float* yb = y + b * g.cout * out_vol + zo0 * slice;
      constexpr int64_t MB = 4;
      for (int64_t o0 = 0; o0 < g.cout; o0 += MB) {
        const int64_t mb = std::min(MB, g.cout - o0);
        for (int64_t t = 0; t < mb; ++t)
          std::fill(yb + (o0 + t) * out_vol, yb + (o0 + t) * out_vol + P, 0.0f);
        for (int64_t r = 0; r < R; ++r) {
          const float* brow = col.data() + r * P;
          for (int64_t t = 0; t < mb; ++t) axpy(yb + (o0 + t) * out_vol, w[(o0 + t) * R + r], brow, P);
        }
      }
    }
}

void conv3d_fwd(const float* x, const float* w, float* y, const Conv3dGeom& g) {
  if (g_parallel)
    conv3d_fwd_omp(x, w, y, g);
  else
    conv3d_fwd_serial(x, w, y, g);
}

// ----------------------------------------------------------------- conv dx

// Both variants accumulate each input-gradient element per filter tap
// (kz, ky, kx) in ascending order, where each tap contributes one complete
// sum over the output channels; the OpenMP variant materializes those
// channel sums as a small matrix product per tap.

void conv3d_dx_serial(const float* gy, const float* w, float* gx, const Conv3dGeom& g) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t k3 = g.k * g.k * g.k;
  const int64_t s = g.stride;
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t ci = 0; ci < g.cin; ++ci)
      for (int64_t zi = 0; zi < g.in_d; ++zi)
        for (int64_t yi = 0; yi < g.in_h; ++yi)
          for (int64_t xi = 0; xi < g.in_w; ++xi) {
            float acc = 0.0f;
            for (int64_t kz = 0; kz < g.k; ++kz) {
              int64_t tz = zi + g.pad_lo - kz;
              if (tz < 0 || tz % s || tz / s >= Do) continue;
              for (int64_t ky = 0; ky < g.k; ++ky) {
                int64_t ty = yi + g.pad_lo - ky;
                if (ty < 0 || ty % s || ty / s >= Ho) continue;
                for (int64_t kx = 0; kx < g.k; ++kx) {
                  int64_t tx = xi + g.pad_lo - kx;
                  if (tx < 0 || tx % s || tx / s >= Wo) continue;
                  float partial = 0.0f;  // complete output-channel sum for this tap
                  for (int64_t o = 0; o < g.cout; ++o)
                    partial += w[(o * g.cin + ci) * k3 + (kz * g.k + ky) * g.k + kx] *
                               gy[((b * g.cout + o) * Do + tz / s) * Ho * Wo + (ty / s) * Wo + tx / s];
                  acc += partial;
                }
              }
            }
            gx[(((b * g.cin + ci) * g.in_d + zi) * g.in_h + yi) * g.in_w + xi] = acc;
          }
}

void conv3d_dx_omp(const float* gy, const float* w, float* gx, const Conv3dGeom& g) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t in_vol = g.in_d * g.in_h * g.in_w;
  const int64_t out_vol = Do * Ho * Wo;
  const int64_t k3 = g.k * g.k * g.k;
  const int64_t s = g.stride;
  constexpr int64_t MB = 4;
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < g.batch; ++b) {
    float* gxb = gx + b * g.cin * in_vol;
    std::fill(gxb, gxb + g.cin * in_vol, 0.0f);
    const float* gyb = gy + b * g.cout * out_vol;
    std::vector<float> wk(static_cast<size_t>(g.cout * g.cin));
    std::vector<float> gyc, t;
    for (int64_t kz = 0; kz < g.k; ++kz) {
      const LoopRange zr = conv_range(kz, g.in_d, Do, s, g.pad_lo);
      for (int64_t ky = 0; ky < g.k; ++ky) {
        const LoopRange yr = conv_range(ky, g.in_h, Ho, s, g.pad_lo);
        for (int64_t kx = 0; kx < g.k; ++kx) {
          const LoopRange xr = conv_range(kx, g.in_w, Wo, s, g.pad_lo);
          if (zr.lo > zr.hi || yr.lo > yr.hi || xr.lo > xr.hi) continue;
          const int64_t off = (kz * g.k + ky) * g.k + kx;
          const int64_t ny = yr.hi - yr.lo + 1, nx = xr.hi - xr.lo + 1;
          for (int64_t o = 0; o < g.cout; ++o)
            for (int64_t ci = 0; ci < g.cin; ++ci)
              wk[o * g.cin + ci] = w[(o * g.cin + ci) * k3 + off];
          // Bound the packed scratch to ~16 MB by splitting the zo range.
          const int64_t rows_cap = std::max<int64_t>(
              1, static_cast<int64_t>(4u << 20) / ((g.cout + g.cin) * nx));
          const int64_t zstep = std::clamp<int64_t>(rows_cap / ny, 1, zr.hi - zr.lo + 1);
          for (int64_t z0 = zr.lo; z0 <= zr.hi; z0 += zstep) {
            const int64_t nz = std::min(zstep, zr.hi - z0 + 1), P = nz * ny * nx;
            gyc.resize(static_cast<size_t>(g.cout * P));
            for (int64_t o = 0; o < g.cout; ++o) {
              const float* gyo = gyb + o * out_vol;
              float* dst = gyc.data() + o * P;
              for (int64_t zo = z0; zo < z0 + nz; ++zo)
                for (int64_t yo = yr.lo; yo <= yr.hi; ++yo, dst += nx)
                  std::copy(gyo + (zo * Ho + yo) * Wo + xr.lo,
                            gyo + (zo * Ho + yo) * Wo + xr.lo + nx, dst);
            }
            // t[ci, p] = sum_o wk[o, ci] * gyc[o, p], four rows per pass.
            t.resize(static_cast<size_t>(g.cin * P));
            for (int64_t c0 = 0; c0 < g.cin; c0 += MB) {
              const int64_t mb = std::min(MB, g.cin - c0);
              for (int64_t u = 0; u < mb; ++u)
                std::fill(t.data() + (c0 + u) * P, t.data() + (c0 + u) * P + P, 0.0f);
              for (int64_t o = 0; o < g.cout; ++o) {
                const float* brow = gyc.data() + o * P;
                for (int64_t u = 0; u < mb; ++u)
                  axpy(t.data() + (c0 + u) * P, wk[o * g.cin + c0 + u], brow, P);
              }
            }
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const float* src = t.data() + ci * P;
              for (int64_t zo = z0; zo < z0 + nz; ++zo) {
                const int64_t zi = zo * s + kz - g.pad_lo;
                for (int64_t yo = yr.lo; yo <= yr.hi; ++yo, src += nx) {
                  const int64_t yi = yo * s + ky - g.pad_lo;
                  float* dst = gxb + ci * in_vol + (zi * g.in_h + yi) * g.in_w + xr.lo * s + kx -
                               g.pad_lo;
                  if (s == 1)
                    for (int64_t i = 0; i < nx; ++i) dst[i] += src[i];
                  else
                    for (int64_t i = 0; i < nx; ++i) dst[i * s] += src[i];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_dx(const float* gy, const float* w, float* gx, const Conv3dGeom& g) {
  if (g_parallel)
    conv3d_dx_omp(gy, w, gx, g);
  else
    conv3d_dx_serial(gy, w, gx, g);
}

// ----------------------------------------------------------------- conv dw

namespace {

// The dw variants accumulate each weight-gradient element into kLanes fixed
// lanes: within one batch sample, the j-th product of the clipped output
// volume (flattened zo, yo, xo scan order) lands in lane j%32, and the lane
// phase restarts at every sample. The lanes are combined once, after the
// last sample, with the fixed tree. Both variants gather the volume into
// contiguous runs and feed them through this one helper; it is noinline so
// serial and OpenMP calls execute the same machine code, keeping their
// results bitwise identical. Runs may be split at multiples of the lane
// count without disturbing the lane assignment.
__attribute__((noinline)) void dw_run_lanes(float* __restrict lanes, const float* __restrict a,
                                            const float* __restrict b, int64_t n) {
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int j = 0; j < kLanes; ++j) lanes[j] += a[i + j] * b[i + j];
  for (int j = 0; i < n; ++i, ++j) lanes[j] += a[i] * b[i];
}

// Reference accumulation for one weight-gradient element: gather the tap's
// input patch and the output gradient over the clipped volume, one sample
// at a time, and fold each gathered run into the lanes. The OpenMP variant
// reproduces this order exactly.
inline float conv_dw_element(const float* x, const float* gy, const Conv3dGeom& g,
                             int64_t o, int64_t ci, int64_t kz, int64_t ky, int64_t kx,
                             std::vector<float>& xbuf, std::vector<float>& gbuf) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t s = g.stride;
  LoopRange zr = conv_range(kz, g.in_d, Do, s, g.pad_lo);
  LoopRange yr = conv_range(ky, g.in_h, Ho, s, g.pad_lo);
  LoopRange xr = conv_range(kx, g.in_w, Wo, s, g.pad_lo);
  if (xr.lo > xr.hi) return 0.0f;
  const int64_t n = xr.hi - xr.lo + 1;
  float lanes[kLanes] = {};
  for (int64_t b = 0; b < g.batch; ++b) {
    const float* xp = x + (b * g.cin + ci) * g.in_d * g.in_h * g.in_w;
    const float* gyp = gy + (b * g.cout + o) * Do * Ho * Wo;
    xbuf.clear();
    gbuf.clear();
    for (int64_t zo = zr.lo; zo <= zr.hi; ++zo) {
      const int64_t zi = zo * s + kz - g.pad_lo;
      for (int64_t yo = yr.lo; yo <= yr.hi; ++yo) {
        const int64_t yi = yo * s + ky - g.pad_lo;
        const float* xrow = xp + (zi * g.in_h + yi) * g.in_w + xr.lo * s + kx - g.pad_lo;
        const float* gyrow = gyp + (zo * Ho + yo) * Wo + xr.lo;
        for (int64_t i = 0; i < n; ++i) {
          xbuf.push_back(xrow[i * s]);
          gbuf.push_back(gyrow[i]);
        }
      }
    }
    dw_run_lanes(lanes, xbuf.data(), gbuf.data(), static_cast<int64_t>(xbuf.size()));
  }
  return lanes_tree(lanes);
}

}  // namespace

void conv3d_dw_serial(const float* x, const float* gy, float* gw, const Conv3dGeom& g) {
  std::vector<float> xbuf, gbuf;  // gather scratch, reused across elements
  for (int64_t o = 0; o < g.cout; ++o)
    for (int64_t ci = 0; ci < g.cin; ++ci)
      for (int64_t kz = 0; kz < g.k; ++kz)
        for (int64_t ky = 0; ky < g.k; ++ky)
          for (int64_t kx = 0; kx < g.k; ++kx)
            gw[(((o * g.cin + ci) * g.k + kz) * g.k + ky) * g.k + kx] =
                conv_dw_element(x, gy, g, o, ci, kz, ky, kx, xbuf, gbuf);
}

void conv3d_dw_omp(const float* x, const float* gy, float* gw, const Conv3dGeom& g) {
  const int64_t Do = g.out_d(), Ho = g.out_h(), Wo = g.out_w();
  const int64_t in_vol = g.in_d * g.in_h * g.in_w, out_vol = Do * Ho * Wo;
  const int64_t k3 = g.k * g.k * g.k;
  const int64_t s = g.stride;
  constexpr int64_t OB = 4, CB = 4;  // output/input channel block
#pragma omp parallel for schedule(static)
  for (int64_t off = 0; off < k3; ++off) {
    const int64_t kz = off / (g.k * g.k), ky = (off / g.k) % g.k, kx = off % g.k;
    const LoopRange zr = conv_range(kz, g.in_d, Do, s, g.pad_lo);
    const LoopRange yr = conv_range(ky, g.in_h, Ho, s, g.pad_lo);
    const LoopRange xr = conv_range(kx, g.in_w, Wo, s, g.pad_lo);
    if (xr.lo > xr.hi) {
      for (int64_t o = 0; o < g.cout; ++o)
        for (int64_t ci = 0; ci < g.cin; ++ci) gw[(o * g.cin + ci) * k3 + off] = 0.0f;
      continue;
    }
    const int64_t nz = std::max<int64_t>(zr.hi - zr.lo + 1, 0);
    const int64_t ny = std::max<int64_t>(yr.hi - yr.lo + 1, 0);
    const int64_t nx = xr.hi - xr.lo + 1;
    const int64_t P = nz * ny * nx;  // clipped output volume per sample
    // Pack, per sample, this tap's input patch and the output gradient over
    // the clipped volume as contiguous runs; every (o, ci) pair then reduces
    // to one straight-line lane accumulation per sample.
    std::vector<float> xp(static_cast<size_t>(g.batch * g.cin * P));
    std::vector<float> gp(static_cast<size_t>(g.batch * g.cout * P));
    for (int64_t b = 0; b < g.batch; ++b) {
      for (int64_t ci = 0; ci < g.cin; ++ci) {
        const float* src0 = x + (b * g.cin + ci) * in_vol;
        float* dst = xp.data() + (b * g.cin + ci) * P;
        for (int64_t zo = zr.lo; zo <= zr.hi; ++zo) {
          const int64_t zi = zo * s + kz - g.pad_lo;
          for (int64_t yo = yr.lo; yo <= yr.hi; ++yo, dst += nx) {
            const int64_t yi = yo * s + ky - g.pad_lo;
            const float* src = src0 + (zi * g.in_h + yi) * g.in_w + xr.lo * s + kx - g.pad_lo;
            if (s == 1)
              std::copy(src, src + nx, dst);
            else
              for (int64_t i = 0; i < nx; ++i) dst[i] = src[i * s];
          }
        }
      }
      for (int64_t o = 0; o < g.cout; ++o) {
        const float* src0 = gy + (b * g.cout + o) * out_vol;
        float* dst = gp.data() + (b * g.cout + o) * P;
        for (int64_t zo = zr.lo; zo <= zr.hi; ++zo)
          for (int64_t yo = yr.lo; yo <= yr.hi; ++yo, dst += nx)
            std::copy(src0 + (zo * Ho + yo) * Wo + xr.lo,
                      src0 + (zo * Ho + yo) * Wo + xr.lo + nx, dst);
      }
    }
    // Segment the runs so each segment's packed rows stay cache-resident
    // while every channel block consumes them; segment starts are multiples
    // of the lane count, which keeps the lane phase aligned with one
    // whole-run pass.
    constexpr int64_t PT = 1024;
    static_assert(PT % kLanes == 0);
    std::vector<float> lanes(static_cast<size_t>(g.cout * g.cin) * kLanes, 0.0f);
    for (int64_t b = 0; b < g.batch; ++b)
      for (int64_t p0 = 0; p0 < P; p0 += PT) {
        const int64_t pn = std::min(PT, P - p0);
        for (int64_t o0 = 0; o0 < g.cout; o0 += OB)
          for (int64_t c0 = 0; c0 < g.cin; c0 += CB) {
            const int64_t ob = std::min(OB, g.cout - o0), cb = std::min(CB, g.cin - c0);
            for (int64_t to = 0; to < ob; ++to) {
              const float* gyrun = gp.data() + (b * g.cout + o0 + to) * P + p0;
              for (int64_t tc = 0; tc < cb; ++tc)
                dw_run_lanes(lanes.data() + ((o0 + to) * g.cin + c0 + tc) * kLanes,
                             xp.data() + (b * g.cin + c0 + tc) * P + p0, gyrun, pn);
            }
          }
      }
    for (int64_t o = 0; o < g.cout; ++o)
      for (int64_t ci = 0; ci < g.cin; ++ci)
        gw[(o * g.cin + ci) * k3 + off] =
            lanes_tree(lanes.data() + (o * g.cin + ci) * kLanes);
  }
}

void conv3d_dw(const float* x, const float* gy, float* gw, const Conv3dGeom& g) {
  if (g_parallel)
    conv3d_dw_omp(x, gy, gw, g);
  else
    conv3d_dw_serial(x, gy, gw, g);
}

// -------------------------------------------------------------------- pool

namespace {

inline void pool_cell(const float* xp, float* yp, int32_t* ap, int64_t h,
                      int64_t w, int64_t zo, int64_t yo, int64_t xo) {
  const int64_t ho = h / 2, wo = w / 2;
  float best = 0.0f;
  int32_t best_idx = -1;
  for (int64_t dz = 0; dz < 2; ++dz)
    for (int64_t dy = 0; dy < 2; ++dy)
      for (int64_t dx = 0; dx < 2; ++dx) {
        int64_t idx = ((zo * 2 + dz) * h + yo * 2 + dy) * w + xo * 2 + dx;
        float v = xp[idx];
        if (best_idx < 0 || v > best) {
          best = v;
          best_idx = static_cast<int32_t>(idx);
        }
      }
  yp[(zo * ho + yo) * wo + xo] = best;
  ap[(zo * ho + yo) * wo + xo] = best_idx;
}

}  // namespace

void maxpool2_fwd_serial(const float* x, float* y, int32_t* argmax, int64_t bc,
                         int64_t d, int64_t h, int64_t w) {
  const int64_t in_vol = d * h * w, out_vol = in_vol / 8;
  for (int64_t p = 0; p < bc; ++p)
    for (int64_t zo = 0; zo < d / 2; ++zo)
      for (int64_t yo = 0; yo < h / 2; ++yo)
        for (int64_t xo = 0; xo < w / 2; ++xo)
          pool_cell(x + p * in_vol, y + p * out_vol, argmax + p * out_vol, h, w, zo, yo, xo);
}

void maxpool2_fwd_omp(const float* x, float* y, int32_t* argmax, int64_t bc,
                      int64_t d, int64_t h, int64_t w) {
  const int64_t in_vol = d * h * w, out_vol = in_vol / 8;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bc; ++p)
    for (int64_t zo = 0; zo < d / 2; ++zo)
      for (int64_t yo = 0; yo < h / 2; ++yo)
        for (int64_t xo = 0; xo < w / 2; ++xo)
          pool_cell(x + p * in_vol, y + p * out_vol, argmax + p * out_vol, h, w, zo, yo, xo);
}

void maxpool2_fwd(const float* x, float* y, int32_t* argmax, int64_t bc, int64_t d,
                  int64_t h, int64_t w) {
  if (g_parallel)
    maxpool2_fwd_omp(x, y, argmax, bc, d, h, w);
  else
    maxpool2_fwd_serial(x, y, argmax, bc, d, h, w);
}

void maxpool2_bwd_serial(const float* gy, const int32_t* argmax, float* gx, int64_t bc,
                         int64_t d, int64_t h, int64_t w) {
  const int64_t in_vol = d * h * w, out_vol = in_vol / 8;
  std::fill(gx, gx + bc * in_vol, 0.0f);
  for (int64_t p = 0; p < bc; ++p)
    for (int64_t i = 0; i < out_vol; ++i)
      gx[p * in_vol + argmax[p * out_vol + i]] += gy[p * out_vol + i];
}

void maxpool2_bwd_omp(const float* gy, const int32_t* argmax, float* gx, int64_t bc,
                      int64_t d, int64_t h, int64_t w) {
  const int64_t in_vol = d * h * w, out_vol = in_vol / 8;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bc; ++p) {
    float* gxp = gx + p * in_vol;
    std::fill(gxp, gxp + in_vol, 0.0f);
    for (int64_t i = 0; i < out_vol; ++i) gxp[argmax[p * out_vol + i]] += gy[p * out_vol + i];
  }
}

void maxpool2_bwd(const float* gy, const int32_t* argmax, float* gx, int64_t bc,
                  int64_t d, int64_t h, int64_t w) {
  if (g_parallel)
    maxpool2_bwd_omp(gy, argmax, gx, bc, d, h, w);
  else
    maxpool2_bwd_serial(gy, argmax, gx, bc, d, h, w);
}

// -------------------------------------------------------------------- gemm

void gemm_nn_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_nn_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  constexpr int64_t MB = 4;  // rows per pass, so each b row is loaded once per block
  const int64_t nblocks = (m + MB - 1) / MB;
#pragma omp parallel for schedule(static)
  for (int64_t blk = 0; blk < nblocks; ++blk) {
    const int64_t i0 = blk * MB, mb = std::min(MB, m - i0);
    for (int64_t t = 0; t < mb; ++t) std::fill(c + (i0 + t) * n, c + (i0 + t) * n + n, 0.0f);
    for (int64_t p = 0; p < k; ++p) {
      const float* brow = b + p * n;
      for (int64_t t = 0; t < mb; ++t) axpy(c + (i0 + t) * n, a[(i0 + t) * k + p], brow, n);
    }
  }
}

void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  if (g_parallel)
    gemm_nn_omp(a, b, c, m, k, n);
  else
    gemm_nn_serial(a, b, c, m, k, n);
}

void gemm_nt_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = dot_lanes(a + i * k, b + j * k, k);
}

void gemm_nt_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = dot_lanes(a + i * k, b + j * k, k);
}

void gemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  if (g_parallel)
    gemm_nt_omp(a, b, c, m, k, n);
  else
    gemm_nt_serial(a, b, c, m, k, n);
}

void gemm_tn_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_tn_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  constexpr int64_t MB = 4;
  const int64_t nblocks = (m + MB - 1) / MB;
#pragma omp parallel for schedule(static)
  for (int64_t blk = 0; blk < nblocks; ++blk) {
    const int64_t i0 = blk * MB, mb = std::min(MB, m - i0);
    for (int64_t t = 0; t < mb; ++t) std::fill(c + (i0 + t) * n, c + (i0 + t) * n + n, 0.0f);
    for (int64_t p = 0; p < k; ++p) {
      const float* brow = b + p * n;
      for (int64_t t = 0; t < mb; ++t) axpy(c + (i0 + t) * n, a[p * m + i0 + t], brow, n);
    }
  }
}

void gemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  if (g_parallel)
    gemm_tn_omp(a, b, c, m, k, n);
  else
    gemm_tn_serial(a, b, c, m, k, n);
}

}  // namespace flexvox::kernels
