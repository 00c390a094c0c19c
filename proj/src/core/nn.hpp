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

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace lipmark {

// Named parameter table. Insertion order is the canonical order used by the
// optimizer and the checkpoint writer.
class ParamStore {
 public:
  int add(const std::string& name, Tensor value, bool trainable = true);
  int find(const std::string& name) const;
  int require(const std::string& name) const;

  const Tensor& value(int pid) const { return values_[static_cast<size_t>(pid)]; }
  Tensor& value_mut(int pid) { return values_[static_cast<size_t>(pid)]; }
  const std::string& name(int pid) const { return names_[static_cast<size_t>(pid)]; }
  bool trainable(int pid) const { return trainable_[static_cast<size_t>(pid)]; }
  void set_trainable(int pid, bool t) { trainable_[static_cast<size_t>(pid)] = t; }
  int size() const { return static_cast<int>(values_.size()); }

  // Parameter ids whose name starts with prefix.
  std::vector<int> with_prefix(const std::string& prefix) const;

  // FNV-1a hash over the raw bytes of the named parameters, for freeze audits.
  uint64_t content_hash(const std::vector<int>& pids) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, int> index_;
};

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))
Tensor uniform_init(const Shape& shape, int64_t fan_in, Rng rng);

// Standard sinusoidal positional encoding table [length x dim].
Tensor sinusoidal_encoding(int64_t length, int64_t dim);

// Per-forward context: which tape to build on, whether the model is in
// training mode (batch-norm statistics), and whether parameters touched by
// this call are blocked from receiving gradient.
struct FwdCtx {
  Tape& tape;
  ParamStore& store;
  bool training = false;
  bool frozen = false;

  Var p(int pid) const { return tape.param(store, pid, !frozen && store.trainable(pid)); }
};

struct Linear {
  int w = -1;
  int b = -1;
  int64_t in = 0, out = 0;

  void init(ParamStore& store, Rng rng, const std::string& name, int64_t in_dim, int64_t out_dim,
            bool bias = true);
  // x [..., in] -> [..., out]
  Var forward(const FwdCtx& ctx, Var x) const;
};

struct LayerNormLayer {
  int gamma = -1;
  int beta = -1;
  int64_t dim = 0;

  void init(ParamStore& store, const std::string& name, int64_t d);
  Var forward(const FwdCtx& ctx, Var x) const;
};

struct BatchNormLayer {
  int gamma = -1;
  int beta = -1;
  int running_mean = -1;
  int running_var = -1;
  int64_t channels = 0;
  double momentum = 0.1;

  void init(ParamStore& store, const std::string& name, int64_t c);
  // Training mode uses batch statistics and updates the running ones;
  // eval mode (or frozen) uses the stored running statistics.
  Var forward(const FwdCtx& ctx, Var x, int channel_axis) const;
};

struct Mlp {
  Linear l1, l2;
  enum class Act { kRelu, kSwish } act = Act::kSwish;

  void init(ParamStore& store, Rng rng, const std::string& name, int64_t in, int64_t hidden,
            int64_t out, Act a);
  Var forward(const FwdCtx& ctx, Var x) const;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  int64_t dim = 0;

  void init(ParamStore& store, Rng rng, const std::string& name, int64_t d, int h);
  // q_in [B,Tq,D], kv_in [B,Tk,D]; mask (optional) is an additive [Tq,Tk]
  // tensor; attn_out, when non-null, receives weights [B,heads,Tq,Tk].
  Var forward(const FwdCtx& ctx, Var q_in, Var kv_in, Var mask, Tensor* attn_out) const;
};

// Additive causal mask [n x n]: 0 on/below diagonal, large negative above.
Tensor causal_mask(int64_t n);

}  // namespace lipmark
