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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mi.hpp"
#include "speaker.hpp"

using namespace lipmark;

namespace {
Tensor random_tensor(Shape shape, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
Tensor gaussian_tensor(Shape shape, Rng rng) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}
}  // namespace

TEST_CASE("vclub exact zeros") {
  // identical ys across the batch
  {
    ParamStore store;
    VariationalNet q;
    q.init(store, Rng(1), "mi.q", 3, 8, 2);
    Rng rng(2);
    Tensor xs = random_tensor({8, 3}, rng.child("xs"));
    Tensor one = random_tensor({1, 2}, rng.child("y"));
    Tensor ys = Tensor::uninit(Shape{8, 2});
    for (int i = 0; i < 8; ++i) std::copy(one.data(), one.data() + 2, ys.data() + i * 2);
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    CHECK(t.val(q.estimate(ctx, t.constant(xs), t.constant(ys)))[0] == 0.0);
  }
  // q that ignores x (all mean-net parameters zero)
  {
    ParamStore store;
    VariationalNet q;
    q.init(store, Rng(3), "mi.q", 3, 8, 2);
    for (int pid : q.param_ids(store)) store.value_mut(pid).fill(0.0);
    Rng rng(4);
    Tensor xs = random_tensor({8, 3}, rng.child("xs"));
    Tensor ys = random_tensor({8, 2}, rng.child("ys"));
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    CHECK(t.val(q.estimate(ctx, t.constant(xs), t.constant(ys)))[0] == 0.0);
  }
  // batch smaller than two is rejected
  {
    ParamStore store;
    VariationalNet q;
    q.init(store, Rng(5), "mi.q", 2, 4, 2);
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    Var x1 = t.constant(Tensor(Shape{1, 2}, 0.0));
    Var y1 = t.constant(Tensor(Shape{1, 2}, 0.0));
    CHECK_THROWS_AS(q.estimate(ctx, x1, y1), Error);
  }
}

TEST_CASE("jsd closed form at zero score and separation when trained") {
  ParamStore store;
  ScoreNet f;
  f.init(store, Rng(7), "mi.f", 1, 1, 32);
  for (int pid : f.param_ids(store)) store.value_mut(pid).fill(0.0);
  Rng rng(8);
  Tensor xs = gaussian_tensor({512, 1}, rng.child("xs"));
  Tensor ys = gaussian_tensor({512, 1}, rng.child("ys"));
  {
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    double est = t.val(f.estimate(ctx, t.constant(xs), t.constant(ys)))[0];
    CHECK(std::fabs(est - (-2.0 * std::log(2.0))) <= 1e-9);
  }

  // independent data, trained score: estimate stays near -2 ln 2
  {
    ParamStore s2;
    ScoreNet f2;
    f2.init(s2, Rng(9), "mi.f", 1, 1, 32);
    Adam opt(1e-3);
    for (int step = 0; step < 400; ++step) fit_score_step(s2, f2, opt, xs, ys);
    Tape t(false);
    FwdCtx ctx{t, s2, false, true};
    double est = t.val(f2.estimate(ctx, t.constant(xs), t.constant(ys)))[0];
    CHECK(est == doctest::Approx(-2.0 * std::log(2.0)).epsilon(0.12));
  }

  // dependent data (y = x), trained score: clear separation from -2 ln 2
  {
    ParamStore s3;
    ScoreNet f3;
    f3.init(s3, Rng(10), "mi.f", 1, 1, 32);
    Adam opt(1e-3);
    for (int step = 0; step < 500; ++step) fit_score_step(s3, f3, opt, xs, xs);
    Tape t(false);
    FwdCtx ctx{t, s3, false, true};
    double est = t.val(f3.estimate(ctx, t.constant(xs), t.constant(xs)))[0];
    CHECK(est > -2.0 * std::log(2.0) + 0.5);
  }
}

TEST_CASE("variational fitting increases held-out log likelihood") {
  Rng rng(11);
  Tensor xs = gaussian_tensor({256, 2}, rng.child("xs"));
  Tensor ys = Tensor::uninit(Shape{256, 2});
  for (int64_t i = 0; i < ys.numel(); ++i) ys[i] = xs[i] + 0.05 * rng.normal();
  Tensor xt = gaussian_tensor({128, 2}, rng.child("xt"));
  Tensor yt = Tensor::uninit(Shape{128, 2});
  for (int64_t i = 0; i < yt.numel(); ++i) yt[i] = xt[i] + 0.05 * rng.normal();

  ParamStore store;
  VariationalNet q;
  q.init(store, Rng(12), "mi.q", 2, 16, 2);
  Adam opt(1e-3);
  auto held_out = [&] {
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    return t.val(t.mean_all(q.log_lik(ctx, t.constant(xt), t.constant(yt))))[0];
  };
  double before = held_out();
  for (int step = 0; step < 200; ++step) fit_variational_step(store, q, opt, xs, ys);
  double after = held_out();
  CHECK(after > before);

  // zero steps leave the parameters untouched
  ParamStore s2;
  VariationalNet q2;
  q2.init(s2, Rng(12), "mi.q", 2, 16, 2);
  uint64_t h_before = s2.content_hash(q2.param_ids(s2));
  CHECK(h_before == s2.content_hash(q2.param_ids(s2)));
}

TEST_CASE("estimator fitting leaves features free of gradient and vice versa") {
  ParamStore store;
  VariationalNet q;
  q.init(store, Rng(13), "mi.q", 2, 8, 2);
  ScoreNet f;
  f.init(store, Rng(14), "mi.f", 2, 2, 8);
  Rng rng(15);
  Tensor xs = random_tensor({8, 2}, rng.child("xs"));
  Tensor ys = random_tensor({8, 2}, rng.child("ys"));

  // model-side loss with frozen estimators: no gradient reaches phi/theta,
  // but the feature leaves do receive gradient
  Tape t(true);
  FwdCtx frozen{t, store, false, /*frozen=*/true};
  Var xv = t.leaf(xs, true);
  Var yv = t.leaf(ys, true);
  Var loss = t.add(q.estimate(frozen, xv, yv), t.neg(f.estimate(frozen, xv, yv)));
  t.backward(loss);
  for (const auto& pg : t.param_grads()) {
    CHECK(pg.grad == nullptr);  // frozen estimator parameters
  }
  CHECK(t.has_grad(xv));
  CHECK(t.has_grad(yv));

  // fitting steps update only the estimator parameters
  uint64_t q_hash = store.content_hash(q.param_ids(store));
  uint64_t f_hash = store.content_hash(f.param_ids(store));
  Adam qo(1e-3), fo(1e-3);
  fit_variational_step(store, q, qo, xs, ys);
  fit_score_step(store, f, fo, xs, ys);
  CHECK(store.content_hash(q.param_ids(store)) != q_hash);
  CHECK(store.content_hash(f.param_ids(store)) != f_hash);
}

TEST_CASE("speaker head basics") {
  ParamStore store;
  SpeakerHead head;
  head.init(store, Rng(21), 8, 4, 5);
  Rng rng(22);
  Tensor h0 = random_tensor({4, 6, 8}, rng);
  Tape t(true);
  FwdCtx ctx{t, store, /*training=*/true, /*frozen=*/false};
  SpeakerHead::Output out = head.forward(ctx, t.constant(h0));
  const Tensor& lp = t.val(out.log_probs);
  CHECK(lp.shape() == Shape{4, 5});
  for (int64_t b = 0; b < 4; ++b) {
    double s = 0.0;
    for (int64_t c = 0; c < 5; ++c) s += std::exp(lp[b * 5 + c]);
    CHECK(std::fabs(s - 1.0) <= 1e-6);
  }

  // permuting frames leaves the pooled features unchanged
  Tensor h0_perm = Tensor::uninit(Shape{4, 6, 8});
  std::vector<int64_t> perm{3, 1, 5, 0, 2, 4};
  for (int64_t b = 0; b < 4; ++b) {
    for (int64_t tt = 0; tt < 6; ++tt) {
      std::copy(h0.data() + (b * 6 + perm[static_cast<size_t>(tt)]) * 8,
                h0.data() + (b * 6 + perm[static_cast<size_t>(tt)] + 1) * 8,
                h0_perm.data() + (b * 6 + tt) * 8);
    }
  }
  Tape t2(true);
  FwdCtx ctx2{t2, store, true, false};
  SpeakerHead::Output out2 = head.forward(ctx2, t2.constant(h0_perm));
  for (int64_t i = 0; i < lp.numel(); ++i) {
    CHECK(t2.val(out2.log_probs)[i] == doctest::Approx(lp[i]).epsilon(1e-9));
  }

  // uniform probabilities give ln C
  Tape t3(false);
  Var lp_uniform = t3.constant(Tensor(Shape{2, 5}, std::log(0.2)));
  FwdCtx ctx3{t3, store, false, true};
  double loss = t3.val(head.loss(ctx3, lp_uniform, {1, 3}))[0];
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  CHECK_THROWS_AS(head.loss(ctx3, lp_uniform, {1, 9}), Error);
}

TEST_CASE("gaussian benchmark lands in the expected band") {
  // reduced version for the unit suite: 2 seeds
  MiBenchResult r = mi_benchmark(0.9, 512, 2, 500, 64, 3e-4);
  CHECK(r.true_mi == doctest::Approx(0.830).epsilon(1e-3));
  for (double est : r.estimates) {
    CHECK(est >= r.lo);
    CHECK(est <= r.hi);
  }
}
