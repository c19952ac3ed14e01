// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace flexvox::kernels {

// Every kernel ships in two variants: a serial reference (readable loop
// nests, kept for testing) and an OpenMP variant with restructured loops.
// Both accumulate partial sums for any given output element in the same
// order, so their results are bitwise identical; the equivalence suite
// asserts exactly that. The unqualified entry points dispatch on the
// global switch below.

void set_parallel(bool enabled);
bool parallel_enabled();

// Geometry of a cubic-kernel, isotropic-stride 3-D convolution.
// Output size per axis: (in + pad_lo + pad_hi - k) / stride + 1.
struct Conv3dGeom {
  int64_t batch = 0;
  int64_t cin = 0;
  int64_t cout = 0;
  int64_t in_d = 0, in_h = 0, in_w = 0;
  int64_t k = 0;
  int64_t stride = 1;
  int64_t pad_lo = 0, pad_hi = 0;

  int64_t out_d() const { return (in_d + pad_lo + pad_hi - k) / stride + 1; }
  int64_t out_h() const { return (in_h + pad_lo + pad_hi - k) / stride + 1; }
  int64_t out_w() const { return (in_w + pad_lo + pad_hi - k) / stride + 1; }
  void validate() const;
};

// y[b,o,zo,yo,xo] = sum_{ci,kz,ky,kx} w[o,ci,kz,ky,kx] * x[b,ci,zi,yi,xi]
// with zi = zo*stride + kz - pad_lo (cross-correlation, zero padding).
void conv3d_fwd(const float* x, const float* w, float* y, const Conv3dGeom& g);
void conv3d_fwd_serial(const float* x, const float* w, float* y, const Conv3dGeom& g);
void conv3d_fwd_omp(const float* x, const float* w, float* y, const Conv3dGeom& g);

// gx = vjp of conv3d_fwd w.r.t. x; doubles as the transposed-convolution
// forward used by the decoder's upsampling layers.
void conv3d_dx(const float* gy, const float* w, float* gx, const Conv3dGeom& g);
void conv3d_dx_serial(const float* gy, const float* w, float* gx, const Conv3dGeom& g);
void conv3d_dx_omp(const float* gy, const float* w, float* gx, const Conv3dGeom& g);

// gw = vjp of conv3d_fwd w.r.t. w.
void conv3d_dw(const float* x, const float* gy, float* gw, const Conv3dGeom& g);
void conv3d_dw_serial(const float* x, const float* gy, float* gw, const Conv3dGeom& g);
void conv3d_dw_omp(const float* x, const float* gy, float* gw, const Conv3dGeom& g);

// 2x2x2 max pooling with stride 2. Input spatial dims must be even.
// argmax holds, per output element, the flat index of the winning input
// element within its [d,h,w] volume; ties resolve to the first in
// (dz,dy,dx) scan order.
void maxpool2_fwd(const float* x, float* y, int32_t* argmax,
                  int64_t batch_channels, int64_t d, int64_t h, int64_t w);
void maxpool2_fwd_serial(const float* x, float* y, int32_t* argmax,
                         int64_t batch_channels, int64_t d, int64_t h, int64_t w);
void maxpool2_fwd_omp(const float* x, float* y, int32_t* argmax,
                      int64_t batch_channels, int64_t d, int64_t h, int64_t w);

void maxpool2_bwd(const float* gy, const int32_t* argmax, float* gx,
                  int64_t batch_channels, int64_t d, int64_t h, int64_t w);
void maxpool2_bwd_serial(const float* gy, const int32_t* argmax, float* gx,
                         int64_t batch_channels, int64_t d, int64_t h, int64_t w);
void maxpool2_bwd_omp(const float* gy, const int32_t* argmax, float* gx,
                      int64_t batch_channels, int64_t d, int64_t h, int64_t w);

// c[i,j] = sum_k a[i,k] * b[k,j]          (a: [m,k], b: [k,n], c: [m,n])
void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_nn_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_nn_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// c[i,j] = sum_k a[i,k] * b[j,k]          (a: [m,k], b: [n,k], c: [m,n])
void gemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_nt_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_nt_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// c[i,j] = sum_k a[k,i] * b[k,j]          (a: [k,m], b: [k,n], c: [m,n])
void gemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_tn_serial(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void gemm_tn_omp(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

}  // namespace flexvox::kernels
