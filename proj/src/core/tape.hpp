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

#pragma once

#include <array>
#include <functional>
#include <vector>

#include "tensor.hpp"

namespace lipmark {

class ParamStore;
class Tape;

// Handle to a tape node.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

inline constexpr Var kNoVar{-1};

// Reverse-mode tape. Ops execute eagerly; nodes are created in topological
// order, so backward() is a single reverse sweep. Single-writer: one thread
// builds and runs a tape (ops may parallelize internally).
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  // Leaves.
  Var constant(Tensor v) { return make_leaf(std::move(v), false); }
  Var leaf(Tensor v, bool requires_grad) { return make_leaf(std::move(v), requires_grad); }
  Var param(const ParamStore& store, int pid, bool trainable = true);

  const Tensor& val(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.external != nullptr ? *n.external : n.value;
  }
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  bool has_grad(Var v) const { return !nodes_[static_cast<size_t>(v.id)].grad.empty(); }
  const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }
  Tensor& grad_buffer(Var v);
  // Takes the gradient by value: an empty target buffer adopts it without a
  // copy (cheap under copy-on-write storage).
  void accum_grad(Var v, Tensor g);

  // Runs the reverse sweep from a scalar root.
  void backward(Var root);

  struct ParamGrad {
    int pid;
    const Tensor* grad;  // null if the parameter never received gradient
  };
  std::vector<ParamGrad> param_grads() const;

  // Parameter ids referenced anywhere on this tape (for graph audits).
  const std::vector<int>& touched_pids() const { return touched_pids_; }
  size_t num_nodes() const { return nodes_.size(); }

  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  // Registers a node with an externally computed value and backward hook.
  Var custom(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  // ---- elementwise / broadcast ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var relu(Var a);
  Var swish(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var expv(Var a);
  Var square(Var a);
  Var clampv(Var a, double lo, double hi);

  // ---- shape ----
  Var reshape(Var a, Shape s);
  Var permute(Var a, const std::vector<int>& dims);
  Var concat(const std::vector<Var>& xs, int axis);
  Var slice(Var a, int axis, int64_t start, int64_t len);

  // ---- reductions ----
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var sum_axis(Var a, int axis);
  Var mean_axis(Var a, int axis);
  Var mean_trailing(Var a, int naxes);

  // ---- normalization / activation over lanes ----
  Var softmax(Var a, int axis);
  Var log_softmax_last(Var a);
  Var layer_norm(Var a, double eps = 1e-5);
  // Training-mode batch norm: normalizes over every axis except channel_axis
  // with population statistics; batch stats are written to the out-params.
  Var batch_norm_train(Var a, int channel_axis, Tensor* batch_mean, Tensor* batch_var,
                       double eps = 1e-5);
  Var glu_last(Var a);

  // ---- gathers ----
  Var gather_rows(Var table, std::vector<int64_t> rows);
  Var gather_index(Var a, std::vector<int64_t> flat_index);

  // ---- linear algebra ----
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var bmm(Var a, Var b, bool transpose_b = false);

  // ---- convolution / pooling ----
  Var conv3d(Var x, Var w, Var b, std::array<int, 3> stride, std::array<int, 3> pad);
  Var conv2d(Var x, Var w, Var b, std::array<int, 2> stride, std::array<int, 2> pad);
  Var conv1d(Var x, Var w, Var b, int stride, int pad);
  Var depthwise_conv1d(Var x, Var w, Var b, int pad);
  Var maxpool3d(Var x, std::array<int, 3> k, std::array<int, 3> s, std::array<int, 3> pad);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    int pid = -1;
    BackwardFn backward;
  };

  Var make_leaf(Tensor v, bool requires_grad);
  Var make_node(Tensor value, bool requires_grad, BackwardFn fn);
  bool any_grad(std::initializer_list<Var> vs) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Var>> param_nodes_;  // (pid, node)
  std::vector<int> touched_pids_;
  bool grad_enabled_;
};

// Max relative error between the autodiff gradient of f at x and central
// finite differences, elementwise, with denominator max(|a|,|b|,1e-8).
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps = 1e-5);

// Same check for parameters living in a store: build_loss must read them
// through Tape::param so the autodiff gradient reaches the store entries.
// Returns the max relative error over every element of every listed pid.
double param_grad_check(ParamStore& store, const std::vector<int>& pids,
                        const std::function<Var(Tape&)>& build_loss, double eps = 1e-5);

}  // namespace lipmark
