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

#include "nn.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tape.hpp"

using namespace lipmark;

namespace {

Tensor random_tensor(Shape shape, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Gradient check of a scalar-valued builder against finite differences.
double check_op(const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
  return grad_check(f, x, 1e-5);
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape t;
  Var i2 = t.constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
  Var prod = t.matmul(i2, i2);
  CHECK(t.val(prod).to_vector() == std::vector<double>{1, 0, 0, 1});

  Var a = t.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
  Var b = t.constant(Tensor::from({2, 1}, {1, 1}));
  Var c = t.matmul(a, b);
  CHECK(t.val(c)[0] == doctest::Approx(3.0));
  CHECK(t.val(c)[1] == doctest::Approx(7.0));
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng.child("a"));
  Tensor b = random_tensor({4, 2}, rng.child("b"));
  double err_a = check_op(
      [&](Tape& t, Var x) { return t.sum_all(t.matmul(x, t.constant(b))); }, a);
  CHECK(err_a <= 1e-6);  // linear map: near-exact
  double err_b = check_op(
      [&](Tape& t, Var x) { return t.sum_all(t.matmul(t.constant(a), x)); }, b);
  CHECK(err_b <= 1e-6);
  // transpose_b path
  Tensor bt = random_tensor({2, 4}, rng.child("bt"));
  double err_bt = check_op(
      [&](Tape& t, Var x) { return t.sum_all(t.square(t.matmul(t.constant(a), x, true))); }, bt);
  CHECK(err_bt <= 1e-4);
}

TEST_CASE("softmax properties") {
  Tape t;
  Var x = t.constant(Tensor::from({2}, {0, 0}));
  auto y = t.val(t.softmax(x, 0));
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));

  Var x2 = t.constant(Tensor::from({2}, {std::log(1.0), std::log(3.0)}));
  auto y2 = t.val(t.softmax(x2, 0));
  CHECK(y2[0] == doctest::Approx(0.25));
  CHECK(y2[1] == doctest::Approx(0.75));

  Var x3 = t.constant(Tensor::from({2}, {1000.0, 1000.0}));
  auto y3 = t.val(t.softmax(x3, 0));
  CHECK(y3[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(y3[1]));

  // rows sum to one on random input, any axis
  Rng rng(3);
  Tensor big = random_tensor({3, 5, 4}, rng, -4, 4);
  for (int axis = 0; axis < 3; ++axis) {
    Tape tt;
    auto sm = tt.val(tt.softmax(tt.constant(big), axis));
    // sum along axis must be 1
    int64_t outer = 1, inner = 1, extent = big.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= big.dim(i);
    for (int i = axis + 1; i < 3; ++i) inner *= big.dim(i);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        double s = 0;
        for (int64_t e = 0; e < extent; ++e) s += sm[(o * extent + e) * inner + in];
        CHECK(std::fabs(s - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("layer_norm closed forms and gradient") {
  Tape t;
  Var c = t.constant(Tensor::from({4}, {2.5, 2.5, 2.5, 2.5}));
  auto n = t.val(t.layer_norm(c));
  for (int64_t i = 0; i < 4; ++i) CHECK(std::fabs(n[i]) <= 1e-9);

  Var v = t.constant(Tensor::from({2}, {1, 3}));
  auto n2 = t.val(t.layer_norm(v));
  CHECK(n2[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(n2[1] == doctest::Approx(1.0).epsilon(1e-4));

  Rng rng(5);
  Tensor x = random_tensor({3, 6}, rng);
  double err = check_op(
      [&](Tape& tt, Var xx) {
        Var y = tt.layer_norm(xx);
        Var w = tt.constant(random_tensor({3, 6}, Rng(77)));
        return tt.sum_all(tt.mul(y, w));
      },
      x);
  CHECK(err <= 1e-4);
}

TEST_CASE("grad_check closed forms") {
  // f = sum(x^2): grad 2x, tiny error
  Tensor x = Tensor::from({2}, {1, 2});
  double err = grad_check([](Tape& t, Var v) { return t.sum_all(t.square(v)); }, x, 1e-5);
  CHECK(err <= 1e-6);
  // linear f: error ~ machine epsilon scale
  double err_lin = grad_check([](Tape& t, Var v) { return t.scale(t.sum_all(v), 3.0); }, x, 1e-5);
  CHECK(err_lin <= 1e-8);

  Tape t;
  Var v = t.leaf(x, true);
  Var loss = t.sum_all(t.square(v));
  t.backward(loss);
  CHECK(t.grad(v)[0] == doctest::Approx(2.0));
  CHECK(t.grad(v)[1] == doctest::Approx(4.0));
}

TEST_CASE("conv3d basics") {
  // zero input, zero bias -> zero output
  Tape t;
  Var x = t.constant(Tensor({1, 1, 2, 4, 4}, 0.0));
  Rng rng(9);
  Var w = t.constant(random_tensor({3, 1, 1, 3, 3}, rng));
  Var y = t.conv3d(x, w, kNoVar, {1, 1, 1}, {0, 1, 1});
  CHECK(t.val(y).max_abs() == 0.0);

  // single-element identity case: value 2, weight 3 -> 6
  Var x1 = t.constant(Tensor::from({1, 1, 1, 1, 1}, {2.0}));
  Var w1 = t.constant(Tensor::from({1, 1, 1, 1, 1}, {3.0}));
  Var y1 = t.conv3d(x1, w1, kNoVar, {1, 1, 1}, {0, 0, 0});
  CHECK(t.val(y1)[0] == doctest::Approx(6.0));

  // published layer geometry: 5x3x3 stride (1,2,2) pad (2,1,1) on 1xTx24x24
  Var x2 = t.constant(random_tensor({1, 1, 3, 24, 24}, rng.child("x2")));
  Var w2 = t.constant(random_tensor({64, 1, 5, 3, 3}, rng.child("w2")));
  Var y2 = t.conv3d(x2, w2, kNoVar, {1, 2, 2}, {2, 1, 1});
  CHECK(t.val(y2).shape() == Shape{1, 64, 3, 12, 12});
}

TEST_CASE("conv linearity") {
  Rng rng(21);
  Tensor xa = random_tensor({2, 2, 3, 5, 5}, rng.child("a"));
  Tensor xb = random_tensor({2, 2, 3, 5, 5}, rng.child("b"));
  Tensor w = random_tensor({3, 2, 2, 3, 3}, rng.child("w"));
  double alpha = 0.7, beta = -1.3;
  Tensor mix(xa.shape());
  for (int64_t i = 0; i < mix.numel(); ++i) mix[i] = alpha * xa[i] + beta * xb[i];
  Tape t;
  Var wv = t.constant(w);
  auto conv = [&](const Tensor& in) {
    return t.val(t.conv3d(t.constant(in), wv, kNoVar, {1, 2, 2}, {1, 1, 1}));
  };
  Tensor ya = conv(xa), yb = conv(xb), ym = conv(mix);
  for (int64_t i = 0; i < ym.numel(); ++i) {
    CHECK(std::fabs(ym[i] - (alpha * ya[i] + beta * yb[i])) <= 1e-10);
  }
}

TEST_CASE("conv and pool gradients") {
  Rng rng(31);
  Tensor x = random_tensor({2, 2, 3, 6, 6}, rng.child("x"));
  Tensor w = random_tensor({3, 2, 2, 3, 3}, rng.child("w"));
  Tensor bias = random_tensor({3}, rng.child("bias"));

  double ex = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(
            t.conv3d(v, t.constant(w), t.constant(bias), {1, 2, 2}, {1, 1, 1})));
      },
      x);
  CHECK(ex <= 1e-4);
  double ew = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(
            t.conv3d(t.constant(x), v, t.constant(bias), {1, 2, 2}, {1, 1, 1})));
      },
      w);
  CHECK(ew <= 1e-4);
  double eb = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(
            t.conv3d(t.constant(x), t.constant(w), v, {1, 2, 2}, {1, 1, 1})));
      },
      bias);
  CHECK(eb <= 1e-4);

  // conv2d / conv1d wrappers
  Tensor x2 = random_tensor({2, 3, 6, 6}, rng.child("x2"));
  Tensor w2 = random_tensor({4, 3, 3, 3}, rng.child("w2"));
  double e2 = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(t.conv2d(v, t.constant(w2), kNoVar, {2, 2}, {1, 1})));
      },
      x2);
  CHECK(e2 <= 1e-4);

  Tensor x1 = random_tensor({2, 4, 7}, rng.child("x1"));
  Tensor w1 = random_tensor({5, 4, 3}, rng.child("w1"));
  double e1 = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(t.conv1d(v, t.constant(w1), kNoVar, 1, 1)));
      },
      x1);
  CHECK(e1 <= 1e-4);

  // depthwise
  Tensor xd = random_tensor({2, 3, 9}, rng.child("xd"));
  Tensor wd = random_tensor({3, 5}, rng.child("wd"));
  double ed = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(t.depthwise_conv1d(v, t.constant(wd), kNoVar, 2)));
      },
      xd);
  CHECK(ed <= 1e-4);
  double edw = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(t.depthwise_conv1d(t.constant(xd), v, kNoVar, 2)));
      },
      wd);
  CHECK(edw <= 1e-4);

  // maxpool (inputs jittered away from ties)
  Tensor xp = random_tensor({2, 2, 3, 6, 6}, rng.child("xp"));
  double ep = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(t.square(t.maxpool3d(v, {1, 3, 3}, {1, 2, 2}, {0, 1, 1})));
      },
      xp);
  CHECK(ep <= 1e-4);
}

TEST_CASE("elementwise and reduction gradients") {
  Rng rng(41);
  Tensor x = random_tensor({3, 4}, rng, 0.2, 2.0);  // positive, away from kinks

  auto scalar_check = [&](const std::function<Var(Tape&, Var)>& f, double tol = 1e-4) {
    CHECK(check_op(f, x) <= tol);
  };
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.swish(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.relu(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.sigmoid(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.softplus(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.expv(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.square(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.clampv(v, -0.5, 1.5)); }, 2e-4);
  scalar_check([](Tape& t, Var v) { return t.mean_all(t.glu_last(v)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.mean_axis(v, 0)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.sum_axis(v, 1)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.mean_trailing(v, 1)); });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.log_softmax_last(v)); });
  // weight the softmax output: a plain sum has an identically-zero gradient
  scalar_check([&](Tape& t, Var v) {
    return t.sum_all(t.mul(t.softmax(v, 1), t.constant(random_tensor({3, 4}, Rng(123)))));
  });
  scalar_check([](Tape& t, Var v) {
    return t.sum_all(t.square(t.permute(v, {1, 0})));
  });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.square(t.slice(v, 1, 1, 2))); });
  scalar_check([](Tape& t, Var v) {
    return t.sum_all(t.square(t.concat({v, v}, 0)));
  });
  scalar_check([](Tape& t, Var v) {
    return t.sum_all(t.square(t.gather_rows(v, {2, 0, 0})));
  });
  scalar_check([](Tape& t, Var v) { return t.sum_all(t.square(t.gather_index(v, {0, 5, 5}))); });
}

TEST_CASE("broadcast binary ops") {
  Rng rng(51);
  Tensor a = random_tensor({2, 3, 4}, rng.child("a"));
  Tensor b = random_tensor({4}, rng.child("b"));
  Tape t;
  auto out = t.val(t.add(t.constant(a), t.constant(b)));
  CHECK(out.shape() == Shape{2, 3, 4});
  CHECK(out[5] == doctest::Approx(a[5] + b[1]));

  // gradient flows through both sides with shape reduction
  double ea = check_op(
      [&](Tape& tt, Var v) { return tt.sum_all(tt.square(tt.mul(v, tt.constant(b)))); }, a);
  CHECK(ea <= 1e-4);
  double eb = check_op(
      [&](Tape& tt, Var v) { return tt.sum_all(tt.square(tt.mul(tt.constant(a), v))); }, b);
  CHECK(eb <= 1e-4);

  // [B,1,d] vs [1,B,d] cross broadcast
  Tensor p = random_tensor({3, 1, 2}, rng.child("p"));
  Tensor q = random_tensor({1, 3, 2}, rng.child("q"));
  Tape t2;
  auto cross = t2.val(t2.sub(t2.constant(p), t2.constant(q)));
  CHECK(cross.shape() == Shape{3, 3, 2});
}

TEST_CASE("batch_norm train mode matches population stats and gradient") {
  Rng rng(61);
  Tensor x = random_tensor({4, 3, 5}, rng);
  Tape t;
  Tensor mean, var;
  Var y = t.batch_norm_train(t.constant(x), 1, &mean, &var);
  // normalized output: per-channel mean 0, variance 1
  const Tensor& yv = t.val(y);
  for (int64_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (int64_t n = 0; n < 4; ++n) {
      for (int64_t i = 0; i < 5; ++i) {
        double v = yv[(n * 3 + c) * 5 + i];
        s += v;
        s2 += v * v;
      }
    }
    CHECK(std::fabs(s / 20.0) <= 1e-9);
    CHECK(s2 / 20.0 == doctest::Approx(1.0).epsilon(1e-3));
  }
  double err = check_op(
      [&](Tape& tt, Var v) {
        Var n = tt.batch_norm_train(v, 1, nullptr, nullptr);
        Var w = tt.constant(random_tensor({4, 3, 5}, Rng(99)));
        return tt.sum_all(tt.mul(n, w));
      },
      x);
  CHECK(err <= 1e-4);
}

TEST_CASE("bmm gradient") {
  Rng rng(71);
  Tensor a = random_tensor({3, 2, 4}, rng.child("a"));
  Tensor b = random_tensor({3, 4, 2}, rng.child("b"));
  double ea = check_op(
      [&](Tape& t, Var v) { return t.sum_all(t.square(t.bmm(v, t.constant(b)))); }, a);
  CHECK(ea <= 1e-4);
  double eb = check_op(
      [&](Tape& t, Var v) { return t.sum_all(t.square(t.bmm(t.constant(a), v))); }, b);
  CHECK(eb <= 1e-4);
  Tensor bt = random_tensor({3, 5, 4}, rng.child("bt"));
  double et = check_op(
      [&](Tape& t, Var v) { return t.sum_all(t.square(t.bmm(t.constant(a), v, true))); }, bt);
  CHECK(et <= 1e-4);
}

TEST_CASE("forward determinism across runs and thread counts") {
  Rng rng(81);
  Tensor x = random_tensor({4, 2, 6, 12, 12}, rng.child("x"));
  Tensor w = random_tensor({8, 2, 3, 3, 3}, rng.child("w"));
  auto run = [&]() {
    Tape t(false);
    Var y = t.conv3d(t.constant(x), t.constant(w), kNoVar, {1, 1, 1}, {1, 1, 1});
    Var z = t.softmax(y, 1);
    return t.val(z);
  };
  set_thread_count(1);
  Tensor y1 = run();
  Tensor y1b = run();
  CHECK(y1.same_values(y1b));
  set_thread_count(2);
  Tensor y2 = run();
  CHECK(y1.same_values(y2));
  set_thread_count(3);
  Tensor y3 = run();
  CHECK(y1.same_values(y3));
  set_thread_count(1);
}

TEST_CASE("attention layer shapes, row sums, and gradient") {
  Rng rng(91);
  ParamStore store;
  MultiHeadAttention mha;
  mha.init(store, rng.child("mha"), "mha", 8, 2);
  Tensor x = random_tensor({2, 5, 8}, rng.child("x"));
  Tape t;
  FwdCtx ctx{t, store, false, false};
  Tensor attn;
  Var y = mha.forward(ctx, t.constant(x), t.constant(x), kNoVar, &attn);
  CHECK(t.val(y).shape() == Shape{2, 5, 8});
  CHECK(attn.shape() == Shape{2, 2, 5, 5});
  for (int64_t r = 0; r < 2 * 2 * 5; ++r) {
    double s = 0;
    for (int64_t c = 0; c < 5; ++c) s += attn[r * 5 + c];
    CHECK(std::fabs(s - 1.0) <= 1e-6);
  }

  // grad through params via tape.param
  Tape t2;
  FwdCtx ctx2{t2, store, false, false};
  Var loss = t2.sum_all(t2.square(mha.forward(ctx2, t2.constant(x), t2.constant(x), kNoVar, nullptr)));
  t2.backward(loss);
  int wq = store.require("mha.q.w");
  bool found = false;
  for (auto& pg : t2.param_grads()) {
    if (pg.pid == wq) {
      REQUIRE(pg.grad != nullptr);
      CHECK(pg.grad->max_abs() > 0.0);
      found = true;
    }
  }
  CHECK(found);

  // finite-difference check on every attention parameter
  std::vector<int> pids = store.with_prefix("mha.");
  double err = param_grad_check(store, pids, [&](Tape& tt) {
    FwdCtx c2{tt, store, false, false};
    return tt.sum_all(tt.square(mha.forward(c2, tt.constant(x), tt.constant(x), kNoVar, nullptr)));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("causal mask blocks future positions") {
  Tensor m = causal_mask(4);
  CHECK(m[0 * 4 + 1] < -1e20);
  CHECK(m[3 * 4 + 2] == 0.0);
}

TEST_CASE("temporal conv3d fast path matches a direct reference") {
  Rng rng(314);
  int64_t n = 3, frames = 7, h = 10, w = 10, co = 2, kd = 5;
  Tensor x = random_tensor({n, 1, frames, h, w}, rng.child("x"));
  Tensor k = random_tensor({co, 1, kd, 3, 3}, rng.child("k"));
  Tensor bias = random_tensor({co}, rng.child("b"));
  Tape t;
  Var y = t.conv3d(t.constant(x), t.constant(k), t.constant(bias), {1, 2, 2}, {2, 1, 1});
  const Tensor& yv = t.val(y);
  REQUIRE(yv.shape() == Shape{n, co, frames, 5, 5});
  // direct reference
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t c = 0; c < co; ++c) {
      for (int64_t oz = 0; oz < frames; ++oz) {
        for (int64_t oy = 0; oy < 5; ++oy) {
          for (int64_t ox = 0; ox < 5; ++ox) {
            double acc = bias[c];
            for (int64_t kz = 0; kz < kd; ++kz) {
              int64_t iz = oz - 2 + kz;
              if (iz < 0 || iz >= frames) continue;
              for (int64_t ky = 0; ky < 3; ++ky) {
                int64_t iy = oy * 2 - 1 + ky;
                if (iy < 0 || iy >= h) continue;
                for (int64_t kx = 0; kx < 3; ++kx) {
                  int64_t ix = ox * 2 - 1 + kx;
                  if (ix < 0 || ix >= w) continue;
                  acc += k[((c * kd + kz) * 3 + ky) * 3 + kx] *
                         x[((ni * frames + iz) * h + iy) * w + ix];
                }
              }
            }
            double got = yv[(((ni * co + c) * frames + oz) * 5 + oy) * 5 + ox];
            CHECK(got == doctest::Approx(acc).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("temporal conv3d fast path gradients") {
  Rng rng(315);
  Tensor x = random_tensor({2, 1, 6, 8, 8}, rng.child("x"));
  Tensor k = random_tensor({2, 1, 5, 3, 3}, rng.child("k"));
  Tensor bias = random_tensor({2}, rng.child("b"));
  double ex = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(
            t.square(t.conv3d(v, t.constant(k), t.constant(bias), {1, 2, 2}, {2, 1, 1})));
      },
      x);
  CHECK(ex <= 1e-4);
  double ek = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(
            t.square(t.conv3d(t.constant(x), v, t.constant(bias), {1, 2, 2}, {2, 1, 1})));
      },
      k);
  CHECK(ek <= 1e-4);
  double eb = check_op(
      [&](Tape& t, Var v) {
        return t.sum_all(
            t.square(t.conv3d(t.constant(x), t.constant(k), v, {1, 2, 2}, {2, 1, 1})));
      },
      bias);
  CHECK(eb <= 1e-4);
}
