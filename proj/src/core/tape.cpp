// Copyright 2026 The Lipmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tape.hpp"

#include <algorithm>
#include <cmath>

#include "nn.hpp"
#include "parallel.hpp"

namespace lipmark {

namespace {

// Pads a shape with leading 1s to the given rank.
Shape pad_shape(const Shape& s, size_t rank) {
  Shape out(rank, 1);
  std::copy(s.begin(), s.end(), out.begin() + (rank - s.size()));
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t rank = std::max(a.size(), b.size());
  Shape pa = pad_shape(a, rank), pb = pad_shape(b, rank), out(rank);
  for (size_t i = 0; i < rank; ++i) {
    LIPMARK_CHECK(pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1, ErrorCode::kDimension,
                  "incompatible broadcast " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(pa[i], pb[i]);
  }
  return out;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Strides into a tensor of shape `s` (padded to out rank) for iteration over
// `out`; 0 where s has extent 1.
std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  Shape ps = pad_shape(s, out.size());
  auto st = row_major_strides(ps);
  for (size_t i = 0; i < out.size(); ++i) {
    if (ps[i] == 1) st[i] = 0;
  }
  return st;
}

// Applies op elementwise over the broadcast of a and b.
template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, F op) {
  if (a.same_shape(b)) {
    Tensor out = Tensor::uninit(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    int64_t n = a.numel();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) po[i] = op(pa[i], pb[i]);
    });
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::uninit(os);
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  auto so = row_major_strides(os);
  int64_t n = out.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  size_t rank = os.size();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      int64_t rem = i, ia = 0, ib = 0;
      for (size_t d = 0; d < rank; ++d) {
        int64_t idx = rem / so[d];
        rem -= idx * so[d];
        ia += idx * sa[d];
        ib += idx * sb[d];
      }
      po[i] = op(pa[ia], pb[ib]);
    }
  });
  return out;
}

// Sums g down to `target` shape (inverse of broadcasting).
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target, 0.0);
  auto st = broadcast_strides(target, g.shape());
  auto so = row_major_strides(g.shape());
  size_t rank = g.shape().size();
  const double* pg = g.data();
  double* po = out.data();
  for (int64_t i = 0; i < g.numel(); ++i) {
    int64_t rem = i, it = 0;
    for (size_t d = 0; d < rank; ++d) {
      int64_t idx = rem / so[d];
      rem -= idx * so[d];
      it += idx * st[d];
    }
    po[it] += pg[i];
  }
  return out;
}

template <typename F>
Tensor unary_apply(const Tensor& a, F op) {
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  parallel_for(a.numel(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) po[i] = op(pa[i]);
  });
  return out;
}

// Elementwise map over two same-shape tensors (used by backward hooks).
template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F op) {
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  parallel_for(a.numel(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) po[i] = op(pa[i], pb[i]);
  });
  return out;
}

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_scalar(double x) {
  // max(x,0) + log1p(exp(-|x|))
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// Splits a shape at `axis` into (outer, extent, inner) for lane iteration.
void lane_split(const Shape& s, int axis, int64_t* outer, int64_t* extent, int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[static_cast<size_t>(i)];
  *extent = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) *inner *= s[i];
}

}  // namespace

Var Tape::make_leaf(Tensor v, bool requires_grad) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::param(const ParamStore& store, int pid, bool trainable) {
  Node n;
  n.external = &store.value(pid);
  n.requires_grad = trainable && grad_enabled_;
  n.pid = pid;
  nodes_.push_back(std::move(n));
  Var v{static_cast<int32_t>(nodes_.size() - 1)};
  param_nodes_.emplace_back(pid, v);
  touched_pids_.push_back(pid);
  return v;
}

Var Tape::make_node(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
  if (!grad_enabled_) return false;
  for (Var v : vs) {
    if (v.valid() && nodes_[static_cast<size_t>(v.id)].requires_grad) return true;
  }
  return false;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.empty()) n.grad = Tensor(val(v).shape(), 0.0);
  return n.grad;
}

void Tape::accum_grad(Var v, Tensor g) {
  Node& node = nodes_[static_cast<size_t>(v.id)];
  if (!node.requires_grad) return;
  const Shape& target = val(v).shape();
  Tensor gg = g.shape() == target ? std::move(g) : reduce_to(g, target);
  if (node.grad.empty()) {
    node.grad = std::move(gg);
    return;
  }
  double* pb = node.grad.data();
  const double* pg = gg.data();
  parallel_for(node.grad.numel(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) pb[i] += pg[i];
  });
}

void Tape::backward(Var root) {
  LIPMARK_CHECK(val(root).numel() == 1, ErrorCode::kInvalidArgument,
                "backward root must be scalar");
  LIPMARK_CHECK(nodes_[static_cast<size_t>(root.id)].requires_grad, ErrorCode::kInvalidArgument,
                "backward root does not require grad");
  grad_buffer(root)[0] = 1.0;
  for (int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

std::vector<Tape::ParamGrad> Tape::param_grads() const {
  std::vector<ParamGrad> out;
  out.reserve(param_nodes_.size());
  for (const auto& [pid, v] : param_nodes_) {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    out.push_back({pid, n.grad.empty() ? nullptr : &n.grad});
  }
  return out;
}

Var Tape::custom(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool rg = false;
  for (Var v : inputs) rg = rg || (v.valid() && requires_grad(v));
  return make_node(std::move(value), rg, std::move(fn));
}

// ---------------- elementwise ----------------

Var Tape::add(Var a, Var b) {
  Tensor out = broadcast_apply(val(a), val(b), [](double x, double y) { return x + y; });
  return make_node(std::move(out), any_grad({a, b}), [this, a, b](Tape& t, const Tensor& g) {
    t.accum_grad(a, g);
    t.accum_grad(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = broadcast_apply(val(a), val(b), [](double x, double y) { return x - y; });
  return make_node(std::move(out), any_grad({a, b}), [a, b](Tape& t, const Tensor& g) {
    t.accum_grad(a, g);
    if (t.requires_grad(b)) {
      Tensor ng = unary_apply(g, [](double x) { return -x; });
      t.accum_grad(b, ng);
    }
  });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = broadcast_apply(val(a), val(b), [](double x, double y) { return x * y; });
  return make_node(std::move(out), any_grad({a, b}), [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor ga = broadcast_apply(g, t.val(b), [](double x, double y) { return x * y; });
      t.accum_grad(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor gb = broadcast_apply(g, t.val(a), [](double x, double y) { return x * y; });
      t.accum_grad(b, gb);
    }
  });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double c) {
  Tensor out = unary_apply(val(a), [c](double x) { return x * c; });
  return make_node(std::move(out), any_grad({a}), [a, c](Tape& t, const Tensor& g) {
    Tensor ga = unary_apply(g, [c](double x) { return x * c; });
    t.accum_grad(a, ga);
  });
}

Var Tape::add_const(Var a, double c) {
  Tensor out = unary_apply(val(a), [c](double x) { return x + c; });
  return make_node(std::move(out), any_grad({a}),
                   [a](Tape& t, const Tensor& g) { t.accum_grad(a, g); });
}

Var Tape::relu(Var a) {
  Tensor out = unary_apply(val(a), [](double x) { return x > 0.0 ? x : 0.0; });
  return make_node(std::move(out), any_grad({a}), [a](Tape& t, const Tensor& g) {
    t.accum_grad(a, map2(g, t.val(a), [](double gv, double xv) { return xv > 0.0 ? gv : 0.0; }));
  });
}

Var Tape::swish(Var a) {
  const Tensor& x = val(a);
  Tensor sig = unary_apply(x, sigmoid_scalar);  // kept for backward
  Tensor out = map2(x, sig, [](double xv, double sv) { return xv * sv; });
  bool rg = any_grad({a});
  return make_node(std::move(out), rg, [a, sig = std::move(sig)](Tape& t, const Tensor& g) {
    const Tensor& x2 = t.val(a);
    Tensor ga = Tensor::uninit(g.shape());
    const double* pg = g.data();
    const double* px = x2.data();
    const double* ps = sig.data();
    double* po = ga.data();
    parallel_for(g.numel(), [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) {
        double s = ps[i];
        po[i] = pg[i] * (s + px[i] * s * (1.0 - s));
      }
    });
    t.accum_grad(a, std::move(ga));
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = unary_apply(val(a), sigmoid_scalar);
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    nodes_[static_cast<size_t>(r.id)].backward = [a, r](Tape& t, const Tensor& g) {
      t.accum_grad(a, map2(g, t.val(r), [](double gv, double yv) { return gv * yv * (1.0 - yv); }));
    };
  }
  return r;
}

Var Tape::softplus(Var a) {
  Tensor out = unary_apply(val(a), softplus_scalar);
  return make_node(std::move(out), any_grad({a}), [a](Tape& t, const Tensor& g) {
    t.accum_grad(a, map2(g, t.val(a), [](double gv, double xv) { return gv * sigmoid_scalar(xv); }));
  });
}

Var Tape::expv(Var a) {
  Tensor out = unary_apply(val(a), [](double x) { return std::exp(x); });
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    nodes_[static_cast<size_t>(r.id)].backward = [a, r](Tape& t, const Tensor& g) {
      t.accum_grad(a, map2(g, t.val(r), [](double gv, double yv) { return gv * yv; }));
    };
  }
  return r;
}

Var Tape::square(Var a) {
  Tensor out = unary_apply(val(a), [](double x) { return x * x; });
  return make_node(std::move(out), any_grad({a}), [a](Tape& t, const Tensor& g) {
    t.accum_grad(a, map2(g, t.val(a), [](double gv, double xv) { return 2.0 * xv * gv; }));
  });
}

Var Tape::clampv(Var a, double lo, double hi) {
  Tensor out = unary_apply(val(a), [lo, hi](double x) { return std::min(hi, std::max(lo, x)); });
  return make_node(std::move(out), any_grad({a}), [a, lo, hi](Tape& t, const Tensor& g) {
    t.accum_grad(a, map2(g, t.val(a), [lo, hi](double gv, double xv) {
                    return (xv >= lo && xv <= hi) ? gv : 0.0;
                  }));
  });
}

// ---------------- shape ----------------

Var Tape::reshape(Var a, Shape s) {
  Tensor out = val(a).reshaped(std::move(s));
  Shape orig = val(a).shape();
  return make_node(std::move(out), any_grad({a}), [a, orig](Tape& t, const Tensor& g) {
    t.accum_grad(a, g.reshaped(orig));
  });
}

namespace {

Tensor permute_tensor(const Tensor& x, const std::vector<int>& dims) {
  const Shape& s = x.shape();
  LIPMARK_CHECK(dims.size() == s.size() && s.size() <= 5, ErrorCode::kDimension,
                "permute rank mismatch");
  Shape os(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) os[i] = s[static_cast<size_t>(dims[i])];
  Tensor out = Tensor::uninit(os);
  auto in_st = row_major_strides(s);
  // input stride per output axis, padded to rank 5 with singleton outer dims
  int64_t st[5] = {0, 0, 0, 0, 0};
  int64_t ext[5] = {1, 1, 1, 1, 1};
  size_t pad = 5 - os.size();
  for (size_t i = 0; i < os.size(); ++i) {
    ext[pad + i] = os[i];
    st[pad + i] = in_st[static_cast<size_t>(dims[i])];
  }
  const double* px = x.data();
  double* po = out.data();
  parallel_for(ext[0] * ext[1], [&](int64_t lo, int64_t hi) {
    for (int64_t ab = lo; ab < hi; ++ab) {
      int64_t a = ab / ext[1], b = ab % ext[1];
      double* dst = po + ab * ext[2] * ext[3] * ext[4];
      int64_t base_ab = a * st[0] + b * st[1];
      for (int64_t c = 0; c < ext[2]; ++c) {
        int64_t base_c = base_ab + c * st[2];
        for (int64_t d = 0; d < ext[3]; ++d) {
          int64_t base_d = base_c + d * st[3];
          for (int64_t e = 0; e < ext[4]; ++e) {
            *dst++ = px[base_d + e * st[4]];
          }
        }
      }
    }
  });
  return out;
}

std::vector<int> inverse_permutation(const std::vector<int>& dims) {
  std::vector<int> inv(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) inv[static_cast<size_t>(dims[i])] = static_cast<int>(i);
  return inv;
}

}  // namespace

Var Tape::permute(Var a, const std::vector<int>& dims) {
  Tensor out = permute_tensor(val(a), dims);
  std::vector<int> inv = inverse_permutation(dims);
  return make_node(std::move(out), any_grad({a}), [a, inv](Tape& t, const Tensor& g) {
    t.accum_grad(a, permute_tensor(g, inv));
  });
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
  LIPMARK_CHECK(!xs.empty(), ErrorCode::kInvalidArgument, "concat of nothing");
  const Shape& s0 = val(xs[0]).shape();
  Shape os = s0;
  int64_t total = 0;
  for (Var v : xs) {
    const Shape& s = val(v).shape();
    LIPMARK_CHECK(s.size() == s0.size(), ErrorCode::kDimension, "concat rank mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis) {
        LIPMARK_CHECK(s[i] == s0[i], ErrorCode::kDimension, "concat extent mismatch");
      }
    }
    total += s[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;
  Tensor out = Tensor::uninit(os);
  int64_t outer, extent, inner;
  lane_split(os, axis, &outer, &extent, &inner);
  int64_t offset = 0;
  std::vector<int64_t> offsets;
  for (Var v : xs) {
    const Tensor& x = val(v);
    int64_t ext = x.dim(axis);
    const double* px = x.data();
    double* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(px + o * ext * inner, px + (o + 1) * ext * inner,
                po + (o * extent + offset) * inner);
    }
    offsets.push_back(offset);
    offset += ext;
  }
  bool rg = false;
  for (Var v : xs) rg = rg || requires_grad(v);
  std::vector<Var> inputs = xs;
  return make_node(std::move(out), rg,
                   [inputs, offsets, axis, outer, extent, inner](Tape& t, const Tensor& g) {
                     for (size_t k = 0; k < inputs.size(); ++k) {
                       if (!t.requires_grad(inputs[k])) continue;
                       const Shape& s = t.val(inputs[k]).shape();
                       int64_t ext = s[static_cast<size_t>(axis)];
                       Tensor gk = Tensor::uninit(s);
                       const double* pg = g.data();
                       double* po = gk.data();
                       for (int64_t o = 0; o < outer; ++o) {
                         const double* src = pg + (o * extent + offsets[k]) * inner;
                         std::copy(src, src + ext * inner, po + o * ext * inner);
                       }
                       t.accum_grad(inputs[k], gk);
                     }
                   });
}

Var Tape::slice(Var a, int axis, int64_t start, int64_t len) {
  const Tensor& x = val(a);
  const Shape& s = x.shape();
  LIPMARK_CHECK(axis >= 0 && axis < x.ndim(), ErrorCode::kDimension, "slice axis out of range");
  LIPMARK_CHECK(start >= 0 && len > 0 && start + len <= s[static_cast<size_t>(axis)],
                ErrorCode::kDimension, "slice range out of bounds");
  Shape os = s;
  os[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::uninit(os);
  int64_t outer, extent, inner;
  lane_split(s, axis, &outer, &extent, &inner);
  const double* px = x.data();
  double* po = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy(px + (o * extent + start) * inner, px + (o * extent + start + len) * inner,
              po + o * len * inner);
  }
  Shape orig = s;
  return make_node(std::move(out), any_grad({a}),
                   [a, axis, start, len, outer, extent, inner, orig](Tape& t, const Tensor& g) {
                     Tensor ga(orig, 0.0);
                     const double* pg = g.data();
                     double* po = ga.data();
                     for (int64_t o = 0; o < outer; ++o) {
                       std::copy(pg + o * len * inner, pg + (o + 1) * len * inner,
                                 po + (o * extent + start) * inner);
                     }
                     t.accum_grad(a, ga);
                   });
}

// ---------------- reductions ----------------

Var Tape::sum_all(Var a) {
  const Tensor& x = val(a);
  constexpr int64_t kChunk = 1 << 16;  // fixed: partials independent of threads
  int64_t n = x.numel();
  int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partials(static_cast<size_t>(nchunks), 0.0);
  const double* px = x.data();
  parallel_for(nchunks, [&](int64_t c0, int64_t c1) {
    for (int64_t c = c0; c < c1; ++c) {
      double s = 0.0;
      int64_t hi = std::min(n, (c + 1) * kChunk);
      for (int64_t i = c * kChunk; i < hi; ++i) s += px[i];
      partials[static_cast<size_t>(c)] = s;
    }
  });
  double s = 0.0;
  for (double p : partials) s += p;
  Shape orig = x.shape();
  return make_node(Tensor::scalar(s), any_grad({a}), [a, orig](Tape& t, const Tensor& g) {
    Tensor ga(orig, g[0]);
    t.accum_grad(a, ga);
  });
}

Var Tape::mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).numel())); }

Var Tape::sum_axis(Var a, int axis) {
  const Tensor& x = val(a);
  const Shape& s = x.shape();
  LIPMARK_CHECK(axis >= 0 && axis < x.ndim(), ErrorCode::kDimension, "sum axis out of range");
  int64_t outer, extent, inner;
  lane_split(s, axis, &outer, &extent, &inner);
  Shape os;
  for (int i = 0; i < x.ndim(); ++i) {
    if (i != axis) os.push_back(s[static_cast<size_t>(i)]);
  }
  if (os.empty()) os.push_back(1);
  Tensor out(os, 0.0);
  const double* px = x.data();
  double* po = out.data();
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      for (int64_t e = 0; e < extent; ++e) {
        const double* src = px + (o * extent + e) * inner;
        double* dst = po + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
  Shape orig = s;
  return make_node(std::move(out), any_grad({a}),
                   [a, orig, outer, extent, inner](Tape& t, const Tensor& g) {
                     Tensor ga = Tensor::uninit(orig);
                     const double* pg = g.data();
                     double* po = ga.data();
                     for (int64_t o = 0; o < outer; ++o) {
                       for (int64_t e = 0; e < extent; ++e) {
                         std::copy(pg + o * inner, pg + (o + 1) * inner,
                                   po + (o * extent + e) * inner);
                       }
                     }
                     t.accum_grad(a, ga);
                   });
}

Var Tape::mean_axis(Var a, int axis) {
  double inv = 1.0 / static_cast<double>(val(a).dim(axis));
  return scale(sum_axis(a, axis), inv);
}

Var Tape::mean_trailing(Var a, int naxes) {
  const Tensor& x = val(a);
  LIPMARK_CHECK(naxes >= 1 && naxes < x.ndim(), ErrorCode::kDimension, "mean_trailing rank");
  int64_t inner = 1;
  for (int i = x.ndim() - naxes; i < x.ndim(); ++i) inner *= x.dim(i);
  int64_t outer = x.numel() / inner;
  Shape os(x.shape().begin(), x.shape().end() - naxes);
  Tensor out = Tensor::uninit(os);
  const double* px = x.data();
  double* po = out.data();
  double invn = 1.0 / static_cast<double>(inner);
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      double s = 0.0;
      const double* src = px + o * inner;
      for (int64_t i = 0; i < inner; ++i) s += src[i];
      po[o] = s * invn;
    }
  });
  Shape orig = x.shape();
  return make_node(std::move(out), any_grad({a}),
                   [a, orig, outer, inner, invn](Tape& t, const Tensor& g) {
                     Tensor ga = Tensor::uninit(orig);
                     const double* pg = g.data();
                     double* po = ga.data();
                     for (int64_t o = 0; o < outer; ++o) {
                       double v = pg[o] * invn;
                       double* dst = po + o * inner;
                       for (int64_t i = 0; i < inner; ++i) dst[i] = v;
                     }
                     t.accum_grad(a, ga);
                   });
}

// ---------------- lane normalizations ----------------

Var Tape::softmax(Var a, int axis) {
  const Tensor& x = val(a);
  LIPMARK_CHECK(axis >= 0 && axis < x.ndim(), ErrorCode::kDimension, "softmax axis out of range");
  int64_t outer, extent, inner;
  lane_split(x.shape(), axis, &outer, &extent, &inner);
  Tensor out = Tensor::uninit(x.shape());
  const double* px = x.data();
  double* po = out.data();
  parallel_for(outer * inner, [&](int64_t lo, int64_t hi) {
    for (int64_t oi = lo; oi < hi; ++oi) {
      int64_t o = oi / inner, in = oi % inner;
      const double* src = px + o * extent * inner + in;
      double* dst = po + o * extent * inner + in;
      double m = src[0];
      for (int64_t e = 1; e < extent; ++e) m = std::max(m, src[e * inner]);
      double z = 0.0;
      for (int64_t e = 0; e < extent; ++e) {
        double v = std::exp(src[e * inner] - m);
        dst[e * inner] = v;
        z += v;
      }
      double invz = 1.0 / z;
      for (int64_t e = 0; e < extent; ++e) dst[e * inner] *= invz;
    }
  });
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    nodes_[static_cast<size_t>(r.id)].backward = [a, r, outer, extent, inner](Tape& t,
                                                                              const Tensor& g) {
      const Tensor& y = t.val(r);
      Tensor ga = Tensor::uninit(g.shape());
      const double* py = y.data();
      const double* pg = g.data();
      double* po = ga.data();
      parallel_for(outer * inner, [&](int64_t lo, int64_t hi) {
        for (int64_t oi = lo; oi < hi; ++oi) {
          int64_t o = oi / inner, in = oi % inner;
          int64_t base = o * extent * inner + in;
          double dot = 0.0;
          for (int64_t e = 0; e < extent; ++e) dot += pg[base + e * inner] * py[base + e * inner];
          for (int64_t e = 0; e < extent; ++e) {
            po[base + e * inner] = py[base + e * inner] * (pg[base + e * inner] - dot);
          }
        }
      });
      t.accum_grad(a, ga);
    };
  }
  return r;
}

Var Tape::log_softmax_last(Var a) {
  const Tensor& x = val(a);
  int axis = x.ndim() - 1;
  int64_t outer, extent, inner;
  lane_split(x.shape(), axis, &outer, &extent, &inner);
  Tensor out = Tensor::uninit(x.shape());
  const double* px = x.data();
  double* po = out.data();
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      const double* src = px + o * extent;
      double* dst = po + o * extent;
      double m = src[0];
      for (int64_t e = 1; e < extent; ++e) m = std::max(m, src[e]);
      double z = 0.0;
      for (int64_t e = 0; e < extent; ++e) z += std::exp(src[e] - m);
      double lz = m + std::log(z);
      for (int64_t e = 0; e < extent; ++e) dst[e] = src[e] - lz;
    }
  });
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    nodes_[static_cast<size_t>(r.id)].backward = [a, r, outer, extent](Tape& t, const Tensor& g) {
      const Tensor& y = t.val(r);
      Tensor ga = Tensor::uninit(g.shape());
      const double* py = y.data();
      const double* pg = g.data();
      double* po = ga.data();
      for (int64_t o = 0; o < outer; ++o) {
        int64_t base = o * extent;
        double gsum = 0.0;
        for (int64_t e = 0; e < extent; ++e) gsum += pg[base + e];
        for (int64_t e = 0; e < extent; ++e) {
          po[base + e] = pg[base + e] - std::exp(py[base + e]) * gsum;
        }
      }
      t.accum_grad(a, ga);
    };
  }
  return r;
}

Var Tape::layer_norm(Var a, double eps) {
  const Tensor& x = val(a);
  LIPMARK_CHECK(x.ndim() >= 1, ErrorCode::kDimension, "layer_norm needs rank >= 1");
  int64_t extent = x.dim(x.ndim() - 1);
  int64_t outer = x.numel() / extent;
  Tensor out = Tensor::uninit(x.shape());
  Tensor invstd = Tensor::uninit(Shape{outer});
  Tensor mean = Tensor::uninit(Shape{outer});
  const double* px = x.data();
  double* po = out.data();
  double* pm = mean.data();
  double* ps = invstd.data();
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      const double* src = px + o * extent;
      double m = 0.0;
      for (int64_t e = 0; e < extent; ++e) m += src[e];
      m /= static_cast<double>(extent);
      double v = 0.0;
      for (int64_t e = 0; e < extent; ++e) {
        double d = src[e] - m;
        v += d * d;
      }
      v /= static_cast<double>(extent);
      double is = 1.0 / std::sqrt(v + eps);
      pm[o] = m;
      ps[o] = is;
      double* dst = po + o * extent;
      for (int64_t e = 0; e < extent; ++e) dst[e] = (src[e] - m) * is;
    }
  });
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    Tensor mean_c = std::move(mean), invstd_c = std::move(invstd);
    nodes_[static_cast<size_t>(r.id)].backward = [a, r, outer, extent, mean_c, invstd_c](
                                                     Tape& t, const Tensor& g) {
      const Tensor& y = t.val(r);  // y is already the normalized value
      (void)mean_c;
      Tensor ga = Tensor::uninit(g.shape());
      const double* py = y.data();
      const double* pg = g.data();
      const double* ps = invstd_c.data();
      double* po = ga.data();
      parallel_for(outer, [&](int64_t lo, int64_t hi) {
        for (int64_t o = lo; o < hi; ++o) {
          int64_t base = o * extent;
          double gm = 0.0, gx = 0.0;
          for (int64_t e = 0; e < extent; ++e) {
            gm += pg[base + e];
            gx += pg[base + e] * py[base + e];
          }
          gm /= static_cast<double>(extent);
          gx /= static_cast<double>(extent);
          for (int64_t e = 0; e < extent; ++e) {
            po[base + e] = ps[o] * (pg[base + e] - gm - py[base + e] * gx);
          }
        }
      });
      t.accum_grad(a, ga);
    };
  }
  return r;
}

Var Tape::batch_norm_train(Var a, int channel_axis, Tensor* batch_mean, Tensor* batch_var,
                           double eps) {
  const Tensor& x = val(a);
  LIPMARK_CHECK(channel_axis >= 0 && channel_axis < x.ndim(), ErrorCode::kDimension,
                "batch_norm channel axis out of range");
  int64_t outer, channels, inner;
  lane_split(x.shape(), channel_axis, &outer, &channels, &inner);
  int64_t count = outer * inner;
  LIPMARK_CHECK(count >= 2, ErrorCode::kInvalidArgument,
                "batch_norm needs at least 2 elements per channel");
  Tensor mean = Tensor::uninit(Shape{channels});
  Tensor var = Tensor::uninit(Shape{channels});
  Tensor invstd = Tensor::uninit(Shape{channels});
  const double* px = x.data();
  parallel_for(channels, [&](int64_t lo, int64_t hi) {
    for (int64_t c = lo; c < hi; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int64_t o = 0; o < outer; ++o) {
        const double* src = px + (o * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          s += src[i];
          s2 += src[i] * src[i];
        }
      }
      double m = s / static_cast<double>(count);
      double v = s2 / static_cast<double>(count) - m * m;
      if (v < 0.0) v = 0.0;  // guard fp cancellation
      mean[c] = m;
      var[c] = v;
      invstd[c] = 1.0 / std::sqrt(v + eps);
    }
  });
  Tensor out = Tensor::uninit(x.shape());
  double* po = out.data();
  const double* pmean = mean.data();
  const double* pinv = invstd.data();
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      for (int64_t c = 0; c < channels; ++c) {
        const double* src = px + (o * channels + c) * inner;
        double* dst = po + (o * channels + c) * inner;
        double m = pmean[c], is = pinv[c];
        for (int64_t i = 0; i < inner; ++i) dst[i] = (src[i] - m) * is;
      }
    }
  });
  if (batch_mean != nullptr) *batch_mean = mean;
  if (batch_var != nullptr) *batch_var = var;
  Var r = make_node(std::move(out), any_grad({a}), nullptr);
  if (requires_grad(r)) {
    Tensor invstd_c = std::move(invstd);
    nodes_[static_cast<size_t>(r.id)].backward = [a, r, outer, channels, inner, count, invstd_c](
                                                     Tape& t, const Tensor& g) {
      const Tensor& y = t.val(r);
      const double* py = y.data();
      const double* pg = g.data();
      Tensor gm = Tensor::uninit(Shape{channels});
      Tensor gx = Tensor::uninit(Shape{channels});
      // per-channel reductions, serial within channel
      parallel_for(channels, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
          double sm = 0.0, sx = 0.0;
          for (int64_t o = 0; o < outer; ++o) {
            int64_t base = (o * channels + c) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              sm += pg[base + i];
              sx += pg[base + i] * py[base + i];
            }
          }
          gm[c] = sm / static_cast<double>(count);
          gx[c] = sx / static_cast<double>(count);
        }
      });
      Tensor ga = Tensor::uninit(g.shape());
      double* po = ga.data();
      const double* pgm = gm.data();
      const double* pgx = gx.data();
      const double* pis = invstd_c.data();
      parallel_for(outer, [&](int64_t lo, int64_t hi) {
        for (int64_t o = lo; o < hi; ++o) {
          for (int64_t c = 0; c < channels; ++c) {
            int64_t base = (o * channels + c) * inner;
            double is = pis[c], m = pgm[c], xg = pgx[c];
            for (int64_t i = 0; i < inner; ++i) {
              po[base + i] = is * (pg[base + i] - m - py[base + i] * xg);
            }
          }
        }
      });
      t.accum_grad(a, ga);
    };
  }
  return r;
}

Var Tape::glu_last(Var a) {
  const Tensor& x = val(a);
  int64_t extent = x.dim(x.ndim() - 1);
  LIPMARK_CHECK(extent % 2 == 0, ErrorCode::kDimension, "glu needs even last extent");
  int axis = x.ndim() - 1;
  Var lhs = slice(a, axis, 0, extent / 2);
  Var gate = slice(a, axis, extent / 2, extent / 2);
  return mul(lhs, sigmoid(gate));
}

// ---------------- gathers ----------------

Var Tape::gather_rows(Var table, std::vector<int64_t> rows) {
  const Tensor& tb = val(table);
  LIPMARK_CHECK(tb.ndim() == 2, ErrorCode::kDimension, "gather_rows expects a matrix");
  int64_t d = tb.dim(1);
  Tensor out = Tensor::uninit(Shape{static_cast<int64_t>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i) {
    LIPMARK_CHECK(rows[i] >= 0 && rows[i] < tb.dim(0), ErrorCode::kInvalidArgument,
                  "gather_rows index out of range");
    std::copy(tb.data() + rows[i] * d, tb.data() + (rows[i] + 1) * d, out.data() + i * d);
  }
  return make_node(std::move(out), any_grad({table}),
                   [table, rows = std::move(rows), d](Tape& t, const Tensor& g) {
                     Tensor gt(t.val(table).shape(), 0.0);
                     for (size_t i = 0; i < rows.size(); ++i) {
                       const double* src = g.data() + static_cast<int64_t>(i) * d;
                       double* dst = gt.data() + rows[i] * d;
                       for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                     }
                     t.accum_grad(table, gt);
                   });
}

Var Tape::gather_index(Var a, std::vector<int64_t> flat_index) {
  const Tensor& x = val(a);
  Tensor out = Tensor::uninit(Shape{static_cast<int64_t>(flat_index.size())});
  for (size_t i = 0; i < flat_index.size(); ++i) {
    LIPMARK_CHECK(flat_index[i] >= 0 && flat_index[i] < x.numel(), ErrorCode::kInvalidArgument,
                  "gather_index out of range");
    out[static_cast<int64_t>(i)] = x[flat_index[i]];
  }
  return make_node(std::move(out), any_grad({a}),
                   [a, idx = std::move(flat_index)](Tape& t, const Tensor& g) {
                     Tensor ga(t.val(a).shape(), 0.0);
                     for (size_t i = 0; i < idx.size(); ++i) {
                       ga[idx[i]] += g[static_cast<int64_t>(i)];
                     }
                     t.accum_grad(a, ga);
                   });
}

// ---------------- gradient checking ----------------

double param_grad_check(ParamStore& store, const std::vector<int>& pids,
                        const std::function<Var(Tape&)>& build_loss, double eps) {
  Tape tape(true);
  Var loss = build_loss(tape);
  LIPMARK_CHECK(tape.val(loss).numel() == 1, ErrorCode::kInvalidArgument,
                "param_grad_check needs scalar loss");
  tape.backward(loss);
  std::vector<Tensor> autograd;
  for (int pid : pids) {
    Tensor g(store.value(pid).shape(), 0.0);
    for (const auto& pg : tape.param_grads()) {
      if (pg.pid == pid && pg.grad != nullptr) {
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += (*pg.grad)[i];
      }
    }
    autograd.push_back(std::move(g));
  }

  double max_rel = 0.0;
  for (size_t k = 0; k < pids.size(); ++k) {
    Tensor& value = store.value_mut(pids[k]);
    for (int64_t i = 0; i < value.numel(); ++i) {
      double orig = value[i];
      value[i] = orig + eps;
      Tape tp(false);
      double fp = tp.val(build_loss(tp))[0];
      value[i] = orig - eps;
      Tape tm(false);
      double fm = tm.val(build_loss(tm))[0];
      value[i] = orig;
      double num = (fp - fm) / (2.0 * eps);
      double a = autograd[k][i];
      double denom = std::max({std::fabs(a), std::fabs(num), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - num) / denom);
    }
  }
  return max_rel;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
  Tape tape(true);
  Var xv = tape.leaf(x, true);
  Var y = f(tape, xv);
  LIPMARK_CHECK(tape.val(y).numel() == 1, ErrorCode::kInvalidArgument,
                "grad_check needs scalar-valued f");
  tape.backward(y);
  Tensor autograd = tape.has_grad(xv) ? tape.grad(xv) : Tensor(x.shape(), 0.0);

  double max_rel = 0.0;
  Tensor xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = xp[i];
    xp[i] = orig + eps;
    Tape tp(false);
    double fp = tp.val(f(tp, tp.leaf(xp, false)))[0];
    xp[i] = orig - eps;
    Tape tm(false);
    double fm = tm.val(f(tm, tm.leaf(xp, false)))[0];
    xp[i] = orig;
    double num = (fp - fm) / (2.0 * eps);
    double a = autograd[i];
    double denom = std::max({std::fabs(a), std::fabs(num), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - num) / denom);
  }
  return max_rel;
}

}  // namespace lipmark
