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

#include "mi.hpp"

#include <cmath>

namespace lipmark {

namespace {
constexpr double kLogvarClamp = 10.0;

void check_batch(const Tensor& xs, const Tensor& ys) {
  LIPMARK_CHECK(xs.ndim() == 2 && ys.ndim() == 2, ErrorCode::kDimension,
                "estimator inputs must be [B, d]");
  LIPMARK_CHECK(xs.dim(0) == ys.dim(0), ErrorCode::kDimension, "estimator batch mismatch");
  LIPMARK_CHECK(xs.dim(0) >= 2, ErrorCode::kInvalidArgument, "estimator needs batch >= 2");
}
}  // namespace

void VariationalNet::init(ParamStore& store, Rng rng, const std::string& name, int64_t x_dim,
                          int64_t hidden, int64_t y_dim) {
  name_ = name;
  x_dim_ = x_dim;
  y_dim_ = y_dim;
  mean_net_.init(store, rng.child("mean"), name + ".mean", x_dim, hidden, y_dim, Mlp::Act::kRelu);
  logvar_ = store.add(name + ".logvar", Tensor(Shape{y_dim}, 0.0));
}

Var VariationalNet::log_lik(const FwdCtx& ctx, Var xs, Var ys) const {
  Tape& t = ctx.tape;
  check_batch(t.val(xs), t.val(ys));
  Var mu = mean_net_.forward(ctx, xs);                      // [B, dy]
  Var lv = t.clampv(ctx.p(logvar_), -kLogvarClamp, kLogvarClamp);
  Var inv = t.expv(t.neg(lv));                              // [dy]
  Var sq = t.square(t.sub(ys, mu));                         // [B, dy]
  Var quad = t.sum_axis(t.mul(sq, inv), 1);                 // [B]
  Var lvsum = t.sum_all(lv);                                // scalar, broadcasts below
  return t.scale(t.add(quad, lvsum), -0.5);                 // [B]
}

Var VariationalNet::log_lik_matrix(const FwdCtx& ctx, Var xs, Var ys) const {
  Tape& t = ctx.tape;
  int64_t batch = t.val(xs).dim(0);
  Var mu = mean_net_.forward(ctx, xs);  // [B, dy]
  Var lv = t.clampv(ctx.p(logvar_), -kLogvarClamp, kLogvarClamp);
  Var inv = t.expv(t.neg(lv));
  Var mu3 = t.reshape(mu, Shape{batch, 1, y_dim_});
  Var ys3 = t.reshape(ys, Shape{1, batch, y_dim_});
  Var sq = t.square(t.sub(ys3, mu3));          // [B, B, dy] (i rows, j cols)
  Var quad = t.sum_axis(t.mul(sq, inv), 2);    // [B, B]
  Var lvsum = t.sum_all(lv);
  return t.scale(t.add(quad, lvsum), -0.5);
}

Var VariationalNet::estimate(const FwdCtx& ctx, Var xs, Var ys) const {
  Tape& t = ctx.tape;
  check_batch(t.val(xs), t.val(ys));
  int64_t batch = t.val(xs).dim(0);
  Var ll = log_lik_matrix(ctx, xs, ys);  // [B, B]
  std::vector<int64_t> diag(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) diag[static_cast<size_t>(i)] = i * batch + i;
  Var d = t.gather_index(ll, std::move(diag));  // [B]
  // (1/2B^2) sum_ij [(ll(i,i) - ll(j,i)) + (ll(j,j) - ll(i,j))] equals the
  // usual positive-minus-negative form, but cancels element-by-element when
  // q ignores x or when all ys coincide, so those zeros are exact
  Var term1 = t.sub(t.reshape(d, Shape{batch, 1}), t.permute(ll, {1, 0}));
  Var term2 = t.sub(t.reshape(d, Shape{1, batch}), ll);
  return t.scale(t.sum_all(t.add(term1, term2)),
                 1.0 / (2.0 * static_cast<double>(batch) * static_cast<double>(batch)));
}

std::vector<int> VariationalNet::param_ids(const ParamStore& store) const {
  return store.with_prefix(name_ + ".");
}

void ScoreNet::init(ParamStore& store, Rng rng, const std::string& name, int64_t x_dim,
                    int64_t y_dim, int64_t hidden) {
  name_ = name;
  net_.init(store, rng.child("net"), name + ".net", x_dim + y_dim, hidden, 1, Mlp::Act::kRelu);
}

Var ScoreNet::scores(const FwdCtx& ctx, Var xs, Var ys) const {
  Tape& t = ctx.tape;
  Var joined = t.concat({xs, ys}, 1);
  Var s = net_.forward(ctx, joined);  // [B, 1]
  return t.reshape(s, Shape{t.val(xs).dim(0)});
}

Var ScoreNet::estimate(const FwdCtx& ctx, Var xs, Var ys) const {
  Tape& t = ctx.tape;
  check_batch(t.val(xs), t.val(ys));
  int64_t batch = t.val(ys).dim(0);
  // deterministic within-batch mismatch: shift ys by one row
  Var ys_shift = t.concat({t.slice(ys, 0, 1, batch - 1), t.slice(ys, 0, 0, 1)}, 0);
  Var pos = scores(ctx, xs, ys);
  Var neg = scores(ctx, xs, ys_shift);
  Var pos_term = t.mean_all(t.neg(t.softplus(t.neg(pos))));
  Var neg_term = t.mean_all(t.softplus(neg));
  return t.sub(pos_term, neg_term);
}

std::vector<int> ScoreNet::param_ids(const ParamStore& store) const {
  return store.with_prefix(name_ + ".");
}

void fit_variational_step(ParamStore& store, VariationalNet& q, Adam& opt, const Tensor& xs,
                          const Tensor& ys) {
  Tape tape(true);
  FwdCtx ctx{tape, store, /*training=*/true, /*frozen=*/false};
  Var loss = tape.neg(tape.mean_all(q.log_lik(ctx, tape.constant(xs), tape.constant(ys))));
  tape.backward(loss);
  opt.step(store, tape.param_grads());
}

void fit_score_step(ParamStore& store, ScoreNet& f, Adam& opt, const Tensor& xs,
                    const Tensor& ys) {
  Tape tape(true);
  FwdCtx ctx{tape, store, /*training=*/true, /*frozen=*/false};
  Var loss = tape.neg(f.estimate(ctx, tape.constant(xs), tape.constant(ys)));
  tape.backward(loss);
  opt.step(store, tape.param_grads());
}

MiBenchResult mi_benchmark(double rho, int batch, int seeds, int fit_steps, int64_t hidden,
                           double lr) {
  LIPMARK_CHECK(rho > -1.0 && rho < 1.0, ErrorCode::kInvalidArgument, "rho must be in (-1, 1)");
  MiBenchResult result;
  result.true_mi = -0.5 * std::log(1.0 - rho * rho);
  result.lo = result.true_mi - 0.15;
  result.hi = result.true_mi + 0.5;
  for (int seed = 1; seed <= seeds; ++seed) {
    Rng rng(static_cast<uint64_t>(seed));
    Rng draw = rng.child("data");
    Tensor xs = Tensor::uninit(Shape{batch, 1});
    Tensor ys = Tensor::uninit(Shape{batch, 1});
    double sigma = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < batch; ++i) {
      double x = draw.normal();
      xs[i] = x;
      ys[i] = rho * x + sigma * draw.normal();
    }
    ParamStore store;
    VariationalNet q;
    q.init(store, rng.child("q"), "bench_q", 1, hidden, 1);
    Adam opt(lr);
    for (int s = 0; s < fit_steps; ++s) fit_variational_step(store, q, opt, xs, ys);
    Tape tape(false);
    FwdCtx ctx{tape, store, false, true};
    Var est = q.estimate(ctx, tape.constant(xs), tape.constant(ys));
    result.estimates.push_back(tape.val(est)[0]);
  }
  result.all_in_band = true;
  for (double e : result.estimates) {
    if (e < result.lo || e > result.hi) result.all_in_band = false;
  }
  return result;
}

}  // namespace lipmark
