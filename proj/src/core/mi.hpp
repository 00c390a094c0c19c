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

#include "nn.hpp"
#include "optimizer.hpp"

namespace lipmark {

// Variational conditional q(y|x): an MLP produces the mean, and a learned
// per-dimension log-variance parameter (clamped to [-10, 10]) gives a
// homoscedastic diagonal Gaussian. Keeping the variance input-independent
// stabilizes the contrastive upper bound; see the fitting notes in mi.cpp.
class VariationalNet {
 public:
  void init(ParamStore& store, Rng rng, const std::string& name, int64_t x_dim, int64_t hidden,
            int64_t y_dim);

  // Row log-likelihoods log q(y_i | x_i), up to the additive 2*pi constant
  // (which cancels in every quantity built from these). Output [B].
  Var log_lik(const FwdCtx& ctx, Var xs, Var ys) const;

  // Contrastive upper-bound estimate: mean_i log q(y_i|x_i)
  // - mean_ij log q(y_j|x_i). Output scalar.
  Var estimate(const FwdCtx& ctx, Var xs, Var ys) const;

  std::vector<int> param_ids(const ParamStore& store) const;

  int64_t x_dim() const { return x_dim_; }
  int64_t y_dim() const { return y_dim_; }

 private:
  // [B, B] matrix of log q(y_j | x_i) (constant-free), plus shared pieces.
  Var log_lik_matrix(const FwdCtx& ctx, Var xs, Var ys) const;

  Mlp mean_net_;
  int logvar_ = -1;
  int64_t x_dim_ = 0, y_dim_ = 0;
  std::string name_;
};

// Score function F(x, y) for the Jensen-Shannon estimator.
class ScoreNet {
 public:
  void init(ParamStore& store, Rng rng, const std::string& name, int64_t x_dim, int64_t y_dim,
            int64_t hidden);

  // Scores [B] for row-paired inputs.
  Var scores(const FwdCtx& ctx, Var xs, Var ys) const;

  // mean(-softplus(-F(x_i, y_i))) - mean(softplus(F(x_i, y_shift(i)))), with
  // negatives built by a deterministic cyclic shift of ys within the batch.
  Var estimate(const FwdCtx& ctx, Var xs, Var ys) const;

  std::vector<int> param_ids(const ParamStore& store) const;

 private:
  Mlp net_;
  std::string name_;
};

// One gradient-ascent step (Adam) on the estimator's own parameters; the
// feature tensors are treated as constants.
void fit_variational_step(ParamStore& store, VariationalNet& q, Adam& opt, const Tensor& xs,
                          const Tensor& ys);
void fit_score_step(ParamStore& store, ScoreNet& f, Adam& opt, const Tensor& xs, const Tensor& ys);

struct MiBenchResult {
  std::vector<double> estimates;  // one per seed
  double true_mi = 0.0;
  double lo = 0.0, hi = 0.0;  // expected band
  bool all_in_band = false;
};

// Correlated-Gaussian benchmark for the upper-bound estimator: draws B pairs
// with correlation rho, fits q for fit_steps, then evaluates the estimate.
MiBenchResult mi_benchmark(double rho, int batch, int seeds, int fit_steps, int64_t hidden,
                           double lr);

}  // namespace lipmark
