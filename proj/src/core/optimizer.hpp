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

#include <cmath>
#include <map>

#include "nn.hpp"

namespace lipmark {

// Adam with optional global-norm gradient clipping. Moments are kept per
// parameter id and created on first update.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // grads: (pid, gradient); entries with null gradients are skipped.
  // clip_norm <= 0 disables clipping. lr_scale multiplies the base rate
  // (used by the warmup/cosine schedule).
  void step(ParamStore& store, const std::vector<Tape::ParamGrad>& grads, double lr_scale = 1.0,
            double clip_norm = 0.0);

  uint64_t t() const { return t_; }
  void set_t(uint64_t t) { t_ = t; }
  double lr() const { return lr_; }

  std::map<int, Tensor>& moment1() { return m_; }
  std::map<int, Tensor>& moment2() { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  uint64_t t_ = 0;
  std::map<int, Tensor> m_, v_;
};

inline void Adam::step(ParamStore& store, const std::vector<Tape::ParamGrad>& grads,
                       double lr_scale, double clip_norm) {
  // merge duplicate pid entries (a parameter can appear several times on a tape)
  std::map<int, Tensor> merged;
  for (const auto& g : grads) {
    if (g.grad == nullptr) continue;
    auto it = merged.find(g.pid);
    if (it == merged.end()) {
      merged.emplace(g.pid, *g.grad);
    } else {
      Tensor& acc = it->second;
      double* pa = acc.data();
      const double* pg = g.grad->data();
      for (int64_t i = 0; i < acc.numel(); ++i) pa[i] += pg[i];
    }
  }
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [pid, g] : merged) {
      const double* p = g.data();
      for (int64_t i = 0; i < g.numel(); ++i) sq += p[i] * p[i];
    }
    double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  double rate = lr_ * lr_scale;
  for (auto& [pid, g] : merged) {
    Tensor& m = m_.try_emplace(pid, Tensor(g.shape(), 0.0)).first->second;
    Tensor& v = v_.try_emplace(pid, Tensor(g.shape(), 0.0)).first->second;
    Tensor& value = store.value_mut(pid);
    double* pm = m.data();
    double* pv = v.data();
    double* pp = value.data();
    const double* pg = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) {
      double gv = pg[i] * scale;
      pm[i] = beta1_ * pm[i] + (1.0 - beta1_) * gv;
      pv[i] = beta2_ * pv[i] + (1.0 - beta2_) * gv * gv;
      double mh = pm[i] / bc1;
      double vh = pv[i] / bc2;
      pp[i] -= rate * mh / (std::sqrt(vh) + eps_);
    }
  }
}

}  // namespace lipmark
