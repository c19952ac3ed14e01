// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flexvox::autodiff {

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
  throw std::invalid_argument(op + ": " + msg);
}

Tape& tape_of(const Var& v, const char* op) {
  if (!v.valid()) fail(op, "invalid Var argument");
  return *v.tape;
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape != b.tape) fail(op, "arguments live on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    fail(op, "shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
}

template <class F>
Tensor unary_ew(const Tensor& a, F f) {
  Tensor out(a.shape());
  const float* ap = a.data();
  float* op_ = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) op_[i] = f(ap[i]);
  return out;
}

template <class F>
Tensor binary_ew(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const float* ap = a.data();
  const float* bp = b.data();
  float* op_ = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) op_[i] = f(ap[i], bp[i]);
  return out;
}

// Channel geometry of a [batch, channel, ...] tensor.
struct ChanGeom {
  int64_t batch, channels, vol;
};

ChanGeom chan_geom(const Tensor& t, const char* op) {
  if (t.rank() < 2) fail(op, "expected a [batch, channel, ...] tensor, got " + t.shape_str());
  int64_t vol = 1;
  for (size_t i = 2; i < t.rank(); ++i) vol *= t.dim(i);
  return {t.dim(0), t.dim(1), vol};
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this, "Var::value").val(*this); }

bool Var::requires_grad() const {
  return tape_of(*this, "Var::requires_grad").node_requires_grad(id);
}

Var Tape::leaf(Tensor v, bool requires_grad) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  n.op = "leaf";
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::val(const Var& v) const {
  if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("Tape::val: Var does not belong to this tape");
  return nodes_[static_cast<size_t>(v.id)].value;
}

bool Tape::node_requires_grad(int32_t id) const {
  return nodes_[static_cast<size_t>(id)].requires_grad;
}

Var Tape::emit(Tensor value, std::vector<int32_t> parents, const char* op, VjpFn vjp) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.op = op;
  for (int32_t p : n.parents)
    if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
  if (n.requires_grad) n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

std::vector<Var> Tape::grad(const Var& root, const std::vector<Var>& wrt) {
  if (root.tape != this) throw std::invalid_argument("Tape::grad: root is not on this tape");
  if (val(root).numel() != 1)
    throw std::invalid_argument("Tape::grad: root must be scalar, got shape " +
                                val(root).shape_str());
  for (const Var& w : wrt)
    if (w.tape != this) throw std::invalid_argument("Tape::grad: wrt Var is not on this tape");

  const int32_t n = static_cast<int32_t>(nodes_.size());

  // Mark ancestors of root that can carry gradient.
  std::vector<char> needed(static_cast<size_t>(n), 0);
  if (nodes_[static_cast<size_t>(root.id)].requires_grad) {
    std::vector<int32_t> stack{root.id};
    needed[static_cast<size_t>(root.id)] = 1;
    while (!stack.empty()) {
      int32_t id = stack.back();
      stack.pop_back();
      for (int32_t p : nodes_[static_cast<size_t>(id)].parents) {
        if (!needed[static_cast<size_t>(p)] && nodes_[static_cast<size_t>(p)].requires_grad) {
          needed[static_cast<size_t>(p)] = 1;
          stack.push_back(p);
        }
      }
    }
  }

  std::vector<Var> acc(static_cast<size_t>(n));
  if (needed[static_cast<size_t>(root.id)])
    acc[static_cast<size_t>(root.id)] = leaf(Tensor(val(root).shape(), 1.0f), false);

  // Node ids are creation order, so descending id order is a reverse
  // topological order of the graph as it stood before this call. Nodes the
  // VJPs append get ids >= n and are untouched here.
  for (int32_t id = root.id; id >= 0; --id) {
    if (!needed[static_cast<size_t>(id)] || !acc[static_cast<size_t>(id)].valid()) continue;
    // Copy out of the node: VJP calls below may reallocate nodes_.
    VjpFn vjp = nodes_[static_cast<size_t>(id)].vjp;
    std::vector<int32_t> parents = nodes_[static_cast<size_t>(id)].parents;
    if (!vjp) continue;
    std::vector<char> need(parents.size(), 0);
    bool any = false;
    for (size_t i = 0; i < parents.size(); ++i) {
      need[i] = needed[static_cast<size_t>(parents[i])];
      any = any || need[i];
    }
    if (!any) continue;
    std::vector<Var> pg = vjp(acc[static_cast<size_t>(id)], need);
    if (pg.size() != parents.size())
      throw std::logic_error(std::string("Tape::grad: op '") +
                             nodes_[static_cast<size_t>(id)].op +
                             "' returned wrong VJP arity");
    for (size_t i = 0; i < parents.size(); ++i) {
      if (!need[i] || !pg[i].valid()) continue;
      Var& slot = acc[static_cast<size_t>(parents[i])];
      slot = slot.valid() ? add(slot, pg[i]) : pg[i];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const Var& slot = acc[static_cast<size_t>(w.id)];
    out.push_back(slot.valid() ? slot : leaf(Tensor(val(w).shape()), false));
  }
  return out;
}

// ----------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "add");
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tensor v = binary_ew(a.value(), b.value(), [](float x, float y) { return x + y; });
  return t.emit(std::move(v), {a.id, b.id}, "add",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{gy, gy};
                });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "sub");
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  Tensor v = binary_ew(a.value(), b.value(), [](float x, float y) { return x - y; });
  return t.emit(std::move(v), {a.id, b.id}, "sub",
                [](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = gy;
                  if (need[1]) g[1] = mul_scalar(gy, -1.0f);
                  return g;
                });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "mul");
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  Tensor v = binary_ew(a.value(), b.value(), [](float x, float y) { return x * y; });
  return t.emit(std::move(v), {a.id, b.id}, "mul",
                [a, b](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = mul(gy, b);
                  if (need[1]) g[1] = mul(gy, a);
                  return g;
                });
}

Var add_scalar(const Var& a, float s) {
  Tape& t = tape_of(a, "add_scalar");
  Tensor v = unary_ew(a.value(), [s](float x) { return x + s; });
  return t.emit(std::move(v), {a.id}, "add_scalar",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{gy};
                });
}

Var mul_scalar(const Var& a, float s) {
  Tape& t = tape_of(a, "mul_scalar");
  Tensor v = unary_ew(a.value(), [s](float x) { return x * s; });
  return t.emit(std::move(v), {a.id}, "mul_scalar",
                [s](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{mul_scalar(gy, s)};
                });
}

Var recip(const Var& a) {
  Tape& t = tape_of(a, "recip");
  Tensor v = unary_ew(a.value(), [](float x) { return 1.0f / x; });
  return t.emit(std::move(v), {a.id}, "recip",
                [a](const Var& gy, const std::vector<char>&) {
                  Var inv2 = recip(mul(a, a));
                  return std::vector<Var>{mul_scalar(mul(gy, inv2), -1.0f)};
                });
}

Var log(const Var& a) {
  Tape& t = tape_of(a, "log");
  Tensor v = unary_ew(a.value(), [](float x) { return std::log(x); });
  return t.emit(std::move(v), {a.id}, "log",
                [a](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{mul(gy, recip(a))};
                });
}

Var square(const Var& a) {
  Tape& t = tape_of(a, "square");
  Tensor v = unary_ew(a.value(), [](float x) { return x * x; });
  return t.emit(std::move(v), {a.id}, "square",
                [a](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{mul(gy, mul_scalar(a, 2.0f))};
                });
}

Var sqrt_safe(const Var& a) {
  Tape& t = tape_of(a, "sqrt_safe");
  Tensor v = unary_ew(a.value(), [](float x) { return std::sqrt(std::max(x, 0.0f)); });
  return t.emit(std::move(v), {a.id}, "sqrt_safe",
                [a](const Var& gy, const std::vector<char>&) {
                  Var root = clamp_min(sqrt_safe(a), 1e-12f);
                  return std::vector<Var>{mul(gy, mul_scalar(recip(root), 0.5f))};
                });
}

Var clamp_min(const Var& a, float lo) {
  Tape& t = tape_of(a, "clamp_min");
  Tensor v = unary_ew(a.value(), [lo](float x) { return std::max(x, lo); });
  return t.emit(std::move(v), {a.id}, "clamp_min",
                [a, lo](const Var& gy, const std::vector<char>&) {
                  Tensor mask = unary_ew(a.value(), [lo](float x) {
                    return x >= lo ? 1.0f : 0.0f;
                  });
                  Var m = a.tape->leaf(std::move(mask), false);
                  return std::vector<Var>{mul(gy, m)};
                });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0f); }

Var leaky_relu(const Var& a, float negative_slope) {
  Tape& t = tape_of(a, "leaky_relu");
  const float s = negative_slope;
  Tensor v = unary_ew(a.value(), [s](float x) { return x > 0.0f ? x : s * x; });
  return t.emit(std::move(v), {a.id}, "leaky_relu",
                [a, s](const Var& gy, const std::vector<char>&) {
                  Tensor mask = unary_ew(a.value(), [s](float x) {
                    return x > 0.0f ? 1.0f : s;
                  });
                  Var m = a.tape->leaf(std::move(mask), false);
                  return std::vector<Var>{mul(gy, m)};
                });
}

Var sigmoid(const Var& a, float eps) {
  Tape& t = tape_of(a, "sigmoid");
  Tensor v = unary_ew(a.value(), [eps](float x) {
    float s = 1.0f / (1.0f + std::exp(-x));
    return std::min(std::max(s, eps), 1.0f - eps);
  });
  return t.emit(std::move(v), {a.id}, "sigmoid",
                [a, eps](const Var& gy, const std::vector<char>&) {
                  Var s = sigmoid(a, eps);
                  Var one_minus = add_scalar(mul_scalar(s, -1.0f), 1.0f);
                  return std::vector<Var>{mul(gy, mul(s, one_minus))};
                });
}

// ----------------------------------------------------------------- dense

namespace {

void check_rank2(const Var& v, const char* op) {
  if (v.value().rank() != 2)
    fail(op, "expected rank-2 tensor, got " + v.value().shape_str());
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "matmul");
  check_same_tape(a, b, "matmul");
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(1) != bv.dim(0))
    fail("matmul", "inner dims differ: " + av.shape_str() + " x " + bv.shape_str());
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor v({m, n});
  kernels::gemm_nn(av.data(), bv.data(), v.data(), m, k, n);
  return t.emit(std::move(v), {a.id, b.id}, "matmul",
                [a, b](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = matmul_nt(gy, b);
                  if (need[1]) g[1] = matmul_tn(a, gy);
                  return g;
                });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "matmul_nt");
  check_same_tape(a, b, "matmul_nt");
  check_rank2(a, "matmul_nt");
  check_rank2(b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(1) != bv.dim(1))
    fail("matmul_nt", "inner dims differ: " + av.shape_str() + " x " + bv.shape_str() + "^T");
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  Tensor v({m, n});
  kernels::gemm_nt(av.data(), bv.data(), v.data(), m, k, n);
  return t.emit(std::move(v), {a.id, b.id}, "matmul_nt",
                [a, b](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = matmul(gy, b);
                  if (need[1]) g[1] = matmul_tn(gy, a);
                  return g;
                });
}

Var matmul_tn(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "matmul_tn");
  check_same_tape(a, b, "matmul_tn");
  check_rank2(a, "matmul_tn");
  check_rank2(b, "matmul_tn");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(0) != bv.dim(0))
    fail("matmul_tn", "inner dims differ: " + av.shape_str() + "^T x " + bv.shape_str());
  const int64_t m = av.dim(1), k = av.dim(0), n = bv.dim(1);
  Tensor v({m, n});
  kernels::gemm_tn(av.data(), bv.data(), v.data(), m, k, n);
  return t.emit(std::move(v), {a.id, b.id}, "matmul_tn",
                [a, b](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = matmul_nt(b, gy);
                  if (need[1]) g[1] = matmul(a, gy);
                  return g;
                });
}

Var add_rowvec(const Var& x, const Var& b) {
  Tape& t = tape_of(x, "add_rowvec");
  check_same_tape(x, b, "add_rowvec");
  check_rank2(x, "add_rowvec");
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1 || bv.dim(0) != xv.dim(1))
    fail("add_rowvec", "bias shape " + bv.shape_str() + " does not match " + xv.shape_str());
  Tensor v(xv.shape());
  const int64_t m = xv.dim(0), n = xv.dim(1);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) v[i * n + j] = xv[i * n + j] + bv[j];
  return t.emit(std::move(v), {x.id, b.id}, "add_rowvec",
                [](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = gy;
                  if (need[1]) g[1] = col_sum(gy);
                  return g;
                });
}

Var col_sum(const Var& x) {
  Tape& t = tape_of(x, "col_sum");
  check_rank2(x, "col_sum");
  const Tensor& xv = x.value();
  const int64_t m = xv.dim(0), n = xv.dim(1);
  Tensor v({n});
  for (int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < m; ++i) acc += xv[i * n + j];
    v[j] = static_cast<float>(acc);
  }
  return t.emit(std::move(v), {x.id}, "col_sum",
                [m](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{broadcast_rows(gy, m)};
                });
}

Var broadcast_rows(const Var& v, int64_t rows) {
  Tape& t = tape_of(v, "broadcast_rows");
  const Tensor& vv = v.value();
  if (vv.rank() != 1) fail("broadcast_rows", "expected rank-1 tensor, got " + vv.shape_str());
  const int64_t n = vv.dim(0);
  Tensor out({rows, n});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < n; ++j) out[i * n + j] = vv[j];
  return t.emit(std::move(out), {v.id}, "broadcast_rows",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{col_sum(gy)};
                });
}

// ----------------------------------------------------------- convolution

namespace {

void check_conv_shapes(const Var& x, const Var& w, const kernels::Conv3dGeom& g,
                       const char* op, bool x_is_output_shaped) {
  g.validate();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  std::vector<int64_t> want_x =
      x_is_output_shaped
          ? std::vector<int64_t>{g.batch, g.cout, g.out_d(), g.out_h(), g.out_w()}
          : std::vector<int64_t>{g.batch, g.cin, g.in_d, g.in_h, g.in_w};
  if (xv.shape() != want_x)
    fail(op, "activation shape " + xv.shape_str() + " does not match geometry " +
                 shape_to_string(want_x));
  std::vector<int64_t> want_w{g.cout, g.cin, g.k, g.k, g.k};
  if (wv.shape() != want_w)
    fail(op, "weight shape " + wv.shape_str() + " does not match geometry " +
                 shape_to_string(want_w));
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const kernels::Conv3dGeom& g) {
  Tape& t = tape_of(x, "conv3d");
  check_same_tape(x, w, "conv3d");
  check_conv_shapes(x, w, g, "conv3d", false);
  Tensor v({g.batch, g.cout, g.out_d(), g.out_h(), g.out_w()});
  kernels::conv3d_fwd(x.value().data(), w.value().data(), v.data(), g);
  return t.emit(std::move(v), {x.id, w.id}, "conv3d",
                [x, w, g](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> out(2);
                  if (need[0]) out[0] = conv3d_grad_input(gy, w, g);
                  if (need[1]) out[1] = conv3d_grad_weight(x, gy, g);
                  return out;
                });
}

Var conv3d_grad_input(const Var& u, const Var& w, const kernels::Conv3dGeom& g) {
  Tape& t = tape_of(u, "conv3d_grad_input");
  check_same_tape(u, w, "conv3d_grad_input");
  check_conv_shapes(u, w, g, "conv3d_grad_input", true);
  Tensor v({g.batch, g.cin, g.in_d, g.in_h, g.in_w});
  kernels::conv3d_dx(u.value().data(), w.value().data(), v.data(), g);
  return t.emit(std::move(v), {u.id, w.id}, "conv3d_grad_input",
                [u, w, g](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> out(2);
                  if (need[0]) out[0] = conv3d(gy, w, g);
                  if (need[1]) out[1] = conv3d_grad_weight(gy, u, g);
                  return out;
                });
}

Var conv3d_grad_weight(const Var& x, const Var& u, const kernels::Conv3dGeom& g) {
  Tape& t = tape_of(x, "conv3d_grad_weight");
  check_same_tape(x, u, "conv3d_grad_weight");
  g.validate();
  const std::vector<int64_t> want_x{g.batch, g.cin, g.in_d, g.in_h, g.in_w};
  if (x.value().shape() != want_x)
    fail("conv3d_grad_weight", "activation shape " + x.value().shape_str() +
                                   " does not match geometry " + shape_to_string(want_x));
  const std::vector<int64_t> want_u{g.batch, g.cout, g.out_d(), g.out_h(), g.out_w()};
  if (u.value().shape() != want_u)
    fail("conv3d_grad_weight", "cotangent shape " + u.value().shape_str() +
                                   " does not match geometry " + shape_to_string(want_u));
  Tensor v({g.cout, g.cin, g.k, g.k, g.k});
  kernels::conv3d_dw(x.value().data(), u.value().data(), v.data(), g);
  return t.emit(std::move(v), {x.id, u.id}, "conv3d_grad_weight",
                [x, u, g](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> out(2);
                  if (need[0]) out[0] = conv3d_grad_input(u, gy, g);
                  if (need[1]) out[1] = conv3d(x, gy, g);
                  return out;
                });
}

Var conv3d_transpose(const Var& x, const Var& w, const kernels::Conv3dGeom& g) {
  return conv3d_grad_input(x, w, g);
}

Var bias_add_chan(const Var& x, const Var& bias) {
  Tape& t = tape_of(x, "bias_add_chan");
  check_same_tape(x, bias, "bias_add_chan");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  ChanGeom cg = chan_geom(xv, "bias_add_chan");
  if (bv.rank() != 1 || bv.dim(0) != cg.channels)
    fail("bias_add_chan", "bias shape " + bv.shape_str() + " does not match " + xv.shape_str());
  Tensor v(xv.shape());
  for (int64_t b = 0; b < cg.batch; ++b)
    for (int64_t c = 0; c < cg.channels; ++c) {
      const float bc = bv[c];
      const int64_t base = (b * cg.channels + c) * cg.vol;
      for (int64_t i = 0; i < cg.vol; ++i) v[base + i] = xv[base + i] + bc;
    }
  return t.emit(std::move(v), {x.id, bias.id}, "bias_add_chan",
                [](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = gy;
                  if (need[1]) g[1] = chan_sum(gy);
                  return g;
                });
}

Var chan_sum(const Var& x) {
  Tape& t = tape_of(x, "chan_sum");
  const Tensor& xv = x.value();
  ChanGeom cg = chan_geom(xv, "chan_sum");
  Tensor v({cg.channels});
  for (int64_t c = 0; c < cg.channels; ++c) {
    double acc = 0.0;
    for (int64_t b = 0; b < cg.batch; ++b) {
      const int64_t base = (b * cg.channels + c) * cg.vol;
      for (int64_t i = 0; i < cg.vol; ++i) acc += xv[base + i];
    }
    v[c] = static_cast<float>(acc);
  }
  std::vector<int64_t> shape = xv.shape();
  return t.emit(std::move(v), {x.id}, "chan_sum",
                [shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{broadcast_chan(gy, shape)};
                });
}

Var broadcast_chan(const Var& v, const std::vector<int64_t>& shape) {
  Tape& t = tape_of(v, "broadcast_chan");
  const Tensor& vv = v.value();
  Tensor out(shape);
  ChanGeom cg = chan_geom(out, "broadcast_chan");
  if (vv.rank() != 1 || vv.dim(0) != cg.channels)
    fail("broadcast_chan", "vector shape " + vv.shape_str() + " does not match target " +
                               shape_to_string(shape));
  for (int64_t b = 0; b < cg.batch; ++b)
    for (int64_t c = 0; c < cg.channels; ++c) {
      const float val = vv[c];
      const int64_t base = (b * cg.channels + c) * cg.vol;
      for (int64_t i = 0; i < cg.vol; ++i) out[base + i] = val;
    }
  return t.emit(std::move(out), {v.id}, "broadcast_chan",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{chan_sum(gy)};
                });
}

// ------------------------------------------------------------------ pool

namespace {

using ArgmaxPtr = std::shared_ptr<std::vector<int32_t>>;

Var pool_gather(const Var& s, const ArgmaxPtr& am, const std::vector<int64_t>& out_shape);

// Scatter of an output-shaped tensor u back to the input shape through the
// recorded argmax. Linear in u; adjoint of pool_gather.
Var pool_scatter(const Var& u, const ArgmaxPtr& am, const std::vector<int64_t>& in_shape) {
  Tape& t = tape_of(u, "maxpool2_scatter");
  const Tensor& uv = u.value();
  Tensor out(in_shape);
  ChanGeom cg = chan_geom(out, "maxpool2_scatter");
  const int64_t out_vol = cg.vol / 8;
  const int64_t planes = cg.batch * cg.channels;
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < out_vol; ++i)
      out[p * cg.vol + (*am)[static_cast<size_t>(p * out_vol + i)]] += uv[p * out_vol + i];
  std::vector<int64_t> u_shape = uv.shape();
  return t.emit(std::move(out), {u.id}, "maxpool2_scatter",
                [am, u_shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{pool_gather(gy, am, u_shape)};
                });
}

Var pool_gather(const Var& s, const ArgmaxPtr& am, const std::vector<int64_t>& out_shape) {
  Tape& t = tape_of(s, "maxpool2_gather");
  const Tensor& sv = s.value();
  ChanGeom cg = chan_geom(sv, "maxpool2_gather");
  Tensor out(out_shape);
  const int64_t out_vol = cg.vol / 8;
  const int64_t planes = cg.batch * cg.channels;
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < out_vol; ++i)
      out[p * out_vol + i] = sv[p * cg.vol + (*am)[static_cast<size_t>(p * out_vol + i)]];
  std::vector<int64_t> s_shape = sv.shape();
  return t.emit(std::move(out), {s.id}, "maxpool2_gather",
                [am, s_shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{pool_scatter(gy, am, s_shape)};
                });
}

}  // namespace

Var maxpool2(const Var& x) {
  Tape& t = tape_of(x, "maxpool2");
  const Tensor& xv = x.value();
  if (xv.rank() != 5) fail("maxpool2", "expected rank-5 tensor, got " + xv.shape_str());
  const int64_t d = xv.dim(2), h = xv.dim(3), w = xv.dim(4);
  if (d % 2 || h % 2 || w % 2)
    fail("maxpool2", "spatial dims must be even, got " + xv.shape_str());
  const int64_t bc = xv.dim(0) * xv.dim(1);
  Tensor v({xv.dim(0), xv.dim(1), d / 2, h / 2, w / 2});
  auto am = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(v.numel()));
  kernels::maxpool2_fwd(xv.data(), v.data(), am->data(), bc, d, h, w);
  std::vector<int64_t> in_shape = xv.shape();
  return t.emit(std::move(v), {x.id}, "maxpool2",
                [am, in_shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{pool_scatter(gy, am, in_shape)};
                });
}

// ----------------------------------------------------------------- shape

Var reshape(const Var& x, const std::vector<int64_t>& shape) {
  Tape& t = tape_of(x, "reshape");
  Tensor v = x.value().reshaped(shape);
  std::vector<int64_t> old_shape = x.value().shape();
  return t.emit(std::move(v), {x.id}, "reshape",
                [old_shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{reshape(gy, old_shape)};
                });
}

Var concat_channels(const Var& a, const Var& b) {
  Tape& t = tape_of(a, "concat_channels");
  check_same_tape(a, b, "concat_channels");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  ChanGeom ag = chan_geom(av, "concat_channels");
  ChanGeom bg = chan_geom(bv, "concat_channels");
  bool tail_ok = av.rank() == bv.rank() && ag.batch == bg.batch && ag.vol == bg.vol;
  for (size_t i = 2; tail_ok && i < av.rank(); ++i) tail_ok = av.dim(i) == bv.dim(i);
  if (!tail_ok)
    fail("concat_channels",
         "incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
  std::vector<int64_t> out_shape = av.shape();
  out_shape[1] = ag.channels + bg.channels;
  Tensor v(out_shape);
  for (int64_t n = 0; n < ag.batch; ++n) {
    float* dst = v.data() + n * (ag.channels + bg.channels) * ag.vol;
    const float* asrc = av.data() + n * ag.channels * ag.vol;
    const float* bsrc = bv.data() + n * bg.channels * bg.vol;
    std::copy(asrc, asrc + ag.channels * ag.vol, dst);
    std::copy(bsrc, bsrc + bg.channels * bg.vol, dst + ag.channels * ag.vol);
  }
  const int64_t c1 = ag.channels, c2 = bg.channels;
  return t.emit(std::move(v), {a.id, b.id}, "concat_channels",
                [c1, c2](const Var& gy, const std::vector<char>& need) {
                  std::vector<Var> g(2);
                  if (need[0]) g[0] = slice_channels(gy, 0, c1);
                  if (need[1]) g[1] = slice_channels(gy, c1, c1 + c2);
                  return g;
                });
}

Var slice_channels(const Var& x, int64_t c_from, int64_t c_to) {
  Tape& t = tape_of(x, "slice_channels");
  const Tensor& xv = x.value();
  ChanGeom cg = chan_geom(xv, "slice_channels");
  if (c_from < 0 || c_to > cg.channels || c_from >= c_to)
    fail("slice_channels", "bad channel range [" + std::to_string(c_from) + "," +
                               std::to_string(c_to) + ") for " + xv.shape_str());
  std::vector<int64_t> out_shape = xv.shape();
  out_shape[1] = c_to - c_from;
  Tensor v(out_shape);
  for (int64_t n = 0; n < cg.batch; ++n) {
    const float* src = xv.data() + (n * cg.channels + c_from) * cg.vol;
    float* dst = v.data() + n * (c_to - c_from) * cg.vol;
    std::copy(src, src + (c_to - c_from) * cg.vol, dst);
  }
  const int64_t total_c = cg.channels;
  return t.emit(std::move(v), {x.id}, "slice_channels",
                [c_from, total_c](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{channel_pad(gy, c_from, total_c)};
                });
}

Var channel_pad(const Var& x, int64_t c_from, int64_t total_c) {
  Tape& t = tape_of(x, "channel_pad");
  const Tensor& xv = x.value();
  ChanGeom cg = chan_geom(xv, "channel_pad");
  if (c_from < 0 || c_from + cg.channels > total_c)
    fail("channel_pad", "channels " + xv.shape_str() + " do not fit at offset " +
                            std::to_string(c_from) + " of " + std::to_string(total_c));
  std::vector<int64_t> out_shape = xv.shape();
  out_shape[1] = total_c;
  Tensor v(out_shape);
  for (int64_t n = 0; n < cg.batch; ++n) {
    const float* src = xv.data() + n * cg.channels * cg.vol;
    float* dst = v.data() + (n * total_c + c_from) * cg.vol;
    std::copy(src, src + cg.channels * cg.vol, dst);
  }
  const int64_t cx = cg.channels;
  return t.emit(std::move(v), {x.id}, "channel_pad",
                [c_from, cx](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{slice_channels(gy, c_from, c_from + cx)};
                });
}

// ------------------------------------------------- reductions / broadcasts

Var sum_all(const Var& x) {
  Tape& t = tape_of(x, "sum_all");
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  Tensor v({1});
  v[0] = static_cast<float>(acc);
  std::vector<int64_t> shape = xv.shape();
  return t.emit(std::move(v), {x.id}, "sum_all",
                [shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{broadcast_scalar(gy, shape)};
                });
}

Var mean_all(const Var& x) {
  Tape& t = tape_of(x, "mean_all");
  const Tensor& xv = x.value();
  if (xv.numel() == 0) fail("mean_all", "empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  Tensor v({1});
  v[0] = static_cast<float>(acc / static_cast<double>(xv.numel()));
  std::vector<int64_t> shape = xv.shape();
  const float inv_n = 1.0f / static_cast<float>(xv.numel());
  return t.emit(std::move(v), {x.id}, "mean_all",
                [shape, inv_n](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{broadcast_scalar(mul_scalar(gy, inv_n), shape)};
                });
}

Var per_sample_sum(const Var& x) {
  Tape& t = tape_of(x, "per_sample_sum");
  const Tensor& xv = x.value();
  if (xv.rank() < 1) fail("per_sample_sum", "expected batched tensor");
  const int64_t b = xv.dim(0);
  const int64_t vol = b > 0 ? xv.numel() / b : 0;
  Tensor v({b});
  for (int64_t n = 0; n < b; ++n) {
    double acc = 0.0;
    for (int64_t i = 0; i < vol; ++i) acc += xv[n * vol + i];
    v[n] = static_cast<float>(acc);
  }
  std::vector<int64_t> shape = xv.shape();
  return t.emit(std::move(v), {x.id}, "per_sample_sum",
                [shape](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{per_sample_broadcast(gy, shape)};
                });
}

Var per_sample_broadcast(const Var& v, const std::vector<int64_t>& shape) {
  Tape& t = tape_of(v, "per_sample_broadcast");
  const Tensor& vv = v.value();
  if (vv.rank() != 1 || shape.empty() || shape[0] != vv.dim(0))
    fail("per_sample_broadcast", "vector " + vv.shape_str() + " does not batch-match " +
                                     shape_to_string(shape));
  Tensor out(shape);
  const int64_t b = shape[0];
  const int64_t vol = b > 0 ? out.numel() / b : 0;
  for (int64_t n = 0; n < b; ++n)
    for (int64_t i = 0; i < vol; ++i) out[n * vol + i] = vv[n];
  return t.emit(std::move(out), {v.id}, "per_sample_broadcast",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{per_sample_sum(gy)};
                });
}

Var broadcast_scalar(const Var& v, const std::vector<int64_t>& shape) {
  Tape& t = tape_of(v, "broadcast_scalar");
  const Tensor& vv = v.value();
  if (vv.numel() != 1)
    fail("broadcast_scalar", "expected scalar, got " + vv.shape_str());
  Tensor out(shape, vv[0]);
  return t.emit(std::move(out), {v.id}, "broadcast_scalar",
                [](const Var& gy, const std::vector<char>&) {
                  return std::vector<Var>{sum_all(gy)};
                });
}

Var detach(const Var& x) {
  Tape& t = tape_of(x, "detach");
  return t.leaf(x.value(), false);
}

}  // namespace flexvox::autodiff
