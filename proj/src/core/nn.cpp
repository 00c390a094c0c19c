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

#include "nn.hpp"

#include <cmath>

namespace lipmark {

int ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  LIPMARK_CHECK(index_.find(name) == index_.end(), ErrorCode::kInvalidArgument,
                "duplicate parameter name: " + name);
  int pid = static_cast<int>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
  trainable_.push_back(trainable);
  index_[name] = pid;
  return pid;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int ParamStore::require(const std::string& name) const {
  int pid = find(name);
  LIPMARK_CHECK(pid >= 0, ErrorCode::kInvalidArgument, "unknown parameter: " + name);
  return pid;
}

std::vector<int> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<int> out;
  for (int pid = 0; pid < size(); ++pid) {
    if (names_[static_cast<size_t>(pid)].rfind(prefix, 0) == 0) out.push_back(pid);
  }
  return out;
}

uint64_t ParamStore::content_hash(const std::vector<int>& pids) const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (int pid : pids) {
    const Tensor& t = value(pid);
    mix_bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
  }
  return h;
}

Tensor uniform_init(const Shape& shape, int64_t fan_in, Rng rng) {
  double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor sinusoidal_encoding(int64_t length, int64_t dim) {
  Tensor pe(Shape{length, dim});
  for (int64_t t = 0; t < length; ++t) {
    for (int64_t i = 0; i < dim; i += 2) {
      double angle = static_cast<double>(t) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe[t * dim + i] = std::sin(angle);
      if (i + 1 < dim) pe[t * dim + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

// ---------------- Linear ----------------

void Linear::init(ParamStore& store, Rng rng, const std::string& name, int64_t in_dim,
                  int64_t out_dim, bool bias) {
  in = in_dim;
  out = out_dim;
  w = store.add(name + ".w", uniform_init(Shape{out_dim, in_dim}, in_dim, rng.child("w")));
  if (bias) b = store.add(name + ".b", uniform_init(Shape{out_dim}, in_dim, rng.child("b")));
}

Var Linear::forward(const FwdCtx& ctx, Var x) const {
  Tape& t = ctx.tape;
  const Shape& s = t.val(x).shape();
  LIPMARK_CHECK(s.back() == in, ErrorCode::kDimension,
                "linear input width mismatch: " + shape_str(s));
  Shape out_shape(s.begin(), s.end() - 1);
  out_shape.push_back(out);
  int64_t rows = t.val(x).numel() / in;
  Var flat = t.reshape(x, Shape{rows, in});
  Var y = t.matmul(flat, ctx.p(w), /*transpose_b=*/true);
  if (b >= 0) y = t.add(y, ctx.p(b));
  return t.reshape(y, out_shape);
}

// ---------------- LayerNorm ----------------

void LayerNormLayer::init(ParamStore& store, const std::string& name, int64_t d) {
  dim = d;
  gamma = store.add(name + ".gamma", Tensor(Shape{d}, 1.0));
  beta = store.add(name + ".beta", Tensor(Shape{d}, 0.0));
}

Var LayerNormLayer::forward(const FwdCtx& ctx, Var x) const {
  Tape& t = ctx.tape;
  Var norm = t.layer_norm(x);
  return t.add(t.mul(norm, ctx.p(gamma)), ctx.p(beta));
}

// ---------------- BatchNorm ----------------

void BatchNormLayer::init(ParamStore& store, const std::string& name, int64_t c) {
  channels = c;
  gamma = store.add(name + ".gamma", Tensor(Shape{c}, 1.0));
  beta = store.add(name + ".beta", Tensor(Shape{c}, 0.0));
  running_mean = store.add(name + ".running_mean", Tensor(Shape{c}, 0.0), /*trainable=*/false);
  running_var = store.add(name + ".running_var", Tensor(Shape{c}, 1.0), /*trainable=*/false);
}

Var BatchNormLayer::forward(const FwdCtx& ctx, Var x, int channel_axis) const {
  Tape& t = ctx.tape;
  const Tensor& xv = t.val(x);
  LIPMARK_CHECK(xv.dim(channel_axis) == channels, ErrorCode::kDimension,
                "batch_norm channel mismatch");
  Shape bshape(static_cast<size_t>(xv.ndim()), 1);
  bshape[static_cast<size_t>(channel_axis)] = channels;

  Var xhat;
  if (ctx.training && !ctx.frozen) {
    Tensor bm, bv;
    xhat = t.batch_norm_train(x, channel_axis, &bm, &bv);
    Tensor& rm = ctx.store.value_mut(running_mean);
    Tensor& rv = ctx.store.value_mut(running_var);
    for (int64_t c = 0; c < channels; ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * bm[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * bv[c];
    }
  } else {
    const Tensor& rm = ctx.store.value(running_mean);
    const Tensor& rv = ctx.store.value(running_var);
    Tensor shift(bshape), sc(bshape);
    for (int64_t c = 0; c < channels; ++c) {
      sc[c] = 1.0 / std::sqrt(rv[c] + 1e-5);
      shift[c] = -rm[c] * sc[c];
    }
    xhat = t.add(t.mul(x, t.constant(sc)), t.constant(shift));
  }
  Var g = t.reshape(ctx.p(gamma), bshape);
  Var be = t.reshape(ctx.p(beta), bshape);
  return t.add(t.mul(xhat, g), be);
}

// ---------------- Mlp ----------------

void Mlp::init(ParamStore& store, Rng rng, const std::string& name, int64_t in, int64_t hidden,
               int64_t out, Act a) {
  act = a;
  l1.init(store, rng.child("l1"), name + ".l1", in, hidden);
  l2.init(store, rng.child("l2"), name + ".l2", hidden, out);
}

Var Mlp::forward(const FwdCtx& ctx, Var x) const {
  Var h = l1.forward(ctx, x);
  h = act == Act::kRelu ? ctx.tape.relu(h) : ctx.tape.swish(h);
  return l2.forward(ctx, h);
}

// ---------------- MultiHeadAttention ----------------

void MultiHeadAttention::init(ParamStore& store, Rng rng, const std::string& name, int64_t d,
                              int h) {
  LIPMARK_CHECK(d % h == 0, ErrorCode::kInvalidArgument, "model dim not divisible by heads");
  heads = h;
  dim = d;
  wq.init(store, rng.child("q"), name + ".q", d, d);
  // no key bias: softmax is invariant to the per-row constant it would add
  wk.init(store, rng.child("k"), name + ".k", d, d, /*bias=*/false);
  wv.init(store, rng.child("v"), name + ".v", d, d);
  wo.init(store, rng.child("o"), name + ".o", d, d);
}

Var MultiHeadAttention::forward(const FwdCtx& ctx, Var q_in, Var kv_in, Var mask,
                                Tensor* attn_out) const {
  Tape& t = ctx.tape;
  const Shape& qs = t.val(q_in).shape();
  const Shape& ks = t.val(kv_in).shape();
  LIPMARK_CHECK(qs.size() == 3 && ks.size() == 3, ErrorCode::kDimension,
                "attention expects [B,T,D]");
  int64_t B = qs[0], Tq = qs[1], Tk = ks[1];
  int64_t dh = dim / heads;
  auto split_heads = [&](Var x, int64_t tt) {
    x = t.reshape(x, Shape{B, tt, static_cast<int64_t>(heads), dh});
    x = t.permute(x, {0, 2, 1, 3});
    return t.reshape(x, Shape{B * heads, tt, dh});
  };
  Var q = split_heads(wq.forward(ctx, q_in), Tq);
  Var k = split_heads(wk.forward(ctx, kv_in), Tk);
  Var v = split_heads(wv.forward(ctx, kv_in), Tk);
  Var scores = t.scale(t.bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (mask.valid()) scores = t.add(scores, mask);
  Var attn = t.softmax(scores, 2);
  if (attn_out != nullptr) {
    *attn_out = t.val(attn).reshaped(Shape{B, static_cast<int64_t>(heads), Tq, Tk});
  }
  Var ctxv = t.bmm(attn, v);
  ctxv = t.reshape(ctxv, Shape{B, static_cast<int64_t>(heads), Tq, dh});
  ctxv = t.permute(ctxv, {0, 2, 1, 3});
  ctxv = t.reshape(ctxv, Shape{B, Tq, dim});
  return wo.forward(ctx, ctxv);
}

Tensor causal_mask(int64_t n) {
  Tensor m(Shape{n, n}, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) m[i * n + j] = -1e30;
  }
  return m;
}

}  // namespace lipmark
