// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flexvox/kernels.hpp"
#include "flexvox/tensor.hpp"

namespace flexvox::autodiff {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  bool requires_grad() const;
};

// Reverse-mode tape whose backward rules are themselves expressed as tape
// ops. Tape::grad therefore returns differentiable Vars, and calling grad
// on an expression built from them differentiates through the first
// backward pass (as needed for gradient penalties).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // New leaf node holding `v`. Parameters pass requires_grad = true;
  // inputs and constants pass false.
  Var leaf(Tensor v, bool requires_grad = false);

  const Tensor& val(const Var& v) const;
  size_t node_count() const { return nodes_.size(); }

  // Gradient of scalar `root` with respect to each Var in `wrt`, returned
  // as new nodes on this tape. Vars unreachable from root get zeros.
  std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt);

  // Internal: append an op node. `vjp(gy, need)` must return one Var per
  // parent (invalid Vars allowed where need[i] is false).
  using VjpFn = std::function<std::vector<Var>(const Var& gy, const std::vector<char>& need)>;
  Var emit(Tensor value, std::vector<int32_t> parents, const char* op, VjpFn vjp);
  bool node_requires_grad(int32_t id) const;

 private:
  struct Node {
    Tensor value;
    std::vector<int32_t> parents;
    bool requires_grad = false;
    VjpFn vjp;
    const char* op = "";
  };
  std::vector<Node> nodes_;
};

// ----- elementwise -----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, float s);
Var mul_scalar(const Var& a, float s);
Var recip(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
// sqrt(max(x, 0)); the backward guards the root at zero.
Var sqrt_safe(const Var& a);
Var clamp_min(const Var& a, float lo);
Var relu(const Var& a);
Var leaky_relu(const Var& a, float negative_slope);
// Logistic function with the output clamped to [eps, 1-eps].
Var sigmoid(const Var& a, float eps = 1e-7f);

// ----- dense -----
Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T
Var matmul_tn(const Var& a, const Var& b);  // [k,m]^T x [k,n]
Var add_rowvec(const Var& x, const Var& b);        // [m,n] + [n]
Var col_sum(const Var& x);                         // [m,n] -> [n]
Var broadcast_rows(const Var& v, int64_t rows);    // [n] -> [rows,n]

// ----- convolution ([batch, channel, z, y, x]) -----
Var conv3d(const Var& x, const Var& w, const kernels::Conv3dGeom& g);
// Adjoint of conv3d in its input: maps output-shaped u to input-shaped
// result. Also the forward pass of the decoder's transposed convolutions,
// where `g` describes the downsampling conv being transposed.
Var conv3d_grad_input(const Var& u, const Var& w, const kernels::Conv3dGeom& g);
Var conv3d_grad_weight(const Var& x, const Var& u, const kernels::Conv3dGeom& g);
Var conv3d_transpose(const Var& x, const Var& w, const kernels::Conv3dGeom& g);
Var bias_add_chan(const Var& x, const Var& bias);
Var chan_sum(const Var& x);                                       // -> [c]
Var broadcast_chan(const Var& v, const std::vector<int64_t>& shape);
Var maxpool2(const Var& x);

// ----- shape -----
Var reshape(const Var& x, const std::vector<int64_t>& shape);
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int64_t c_from, int64_t c_to);
// Embed x's channels at [c_from, c_from+cx) in a total_c-channel zero tensor.
Var channel_pad(const Var& x, int64_t c_from, int64_t total_c);

// ----- reductions / broadcasts -----
Var sum_all(const Var& x);   // -> [1]
Var mean_all(const Var& x);  // -> [1]
Var per_sample_sum(const Var& x);                                  // [b,...] -> [b]
Var per_sample_broadcast(const Var& v, const std::vector<int64_t>& shape);
Var broadcast_scalar(const Var& v, const std::vector<int64_t>& shape);

// Copy of x's value entering the graph as a constant (gradient barrier).
Var detach(const Var& x);

}  // namespace flexvox::autodiff
