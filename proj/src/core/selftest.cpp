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

#include "selftest.hpp"

#include <cmath>

#include "ctc.hpp"
#include "frontend.hpp"
#include "mi.hpp"
#include "vocab.hpp"

namespace lipmark {

namespace {

Tensor random_tensor(Shape shape, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct Reporter {
  std::ostream& out;
  bool all_ok = true;
  void check(const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << detail << "\n";
    all_ok = all_ok && ok;
  }
};

void ctc_oracle_grid(Reporter& rep) {
  Rng rng(2024);
  double worst = 0.0;
  int cases = 0, infeasible = 0;
  for (int frames = 1; frames <= 4; ++frames) {
    for (int vocab = 2; vocab <= 3; ++vocab) {
      for (int len = 0; len <= 2; ++len) {
        for (int draw = 0; draw < 10; ++draw) {
          Rng r = rng.child("case", static_cast<uint64_t>(((frames * 8 + vocab) * 8 + len)),
                            static_cast<uint64_t>(draw));
          Tensor logits = random_tensor({frames, vocab}, r.child("logits"), -2.0, 2.0);
          std::vector<int> target;
          for (int i = 0; i < len; ++i) {
            target.push_back(1 + static_cast<int>(r.below(static_cast<uint64_t>(vocab - 1))));
          }
          if (ctc_min_frames(target) > frames) {
            ++infeasible;
            bool threw = false;
            try {
              ctc_loss_value(logits, target);
            } catch (const Error& e) {
              threw = e.code() == ErrorCode::kInfeasible;
            }
            bool brute_inf = std::isinf(ctc_brute_force(logits, target));
            if (!(threw && brute_inf)) {
              rep.check("ctc infeasible agreement", false, "case disagreed");
              return;
            }
            continue;
          }
          double dp = ctc_loss_value(logits, target);
          double brute = ctc_brute_force(logits, target);
          worst = std::max(worst, std::fabs(dp - brute));
          ++cases;
        }
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max |dp - oracle| = %.3g over %d cases (%d infeasible)", worst,
                cases, infeasible);
  rep.check("ctc oracle grid", worst <= 1e-9, buf);
}

void gradient_checks(Reporter& rep) {
  Rng rng(77);
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  Tensor x = random_tensor({3, 4}, rng.child("x"), 0.2, 1.5);
  track(grad_check([](Tape& t, Var v) { return t.sum_all(t.square(t.swish(v))); }, x));
  track(grad_check([](Tape& t, Var v) { return t.sum_all(t.square(t.layer_norm(v))); }, x));
  track(grad_check(
      [](Tape& t, Var v) { return t.sum_all(t.square(t.log_softmax_last(v))); }, x));
  Tensor xc = random_tensor({2, 2, 3, 6, 6}, rng.child("xc"));
  Tensor wc = random_tensor({3, 2, 2, 3, 3}, rng.child("wc"));
  track(grad_check(
      [&](Tape& t, Var v) {
        return t.sum_all(
            t.square(t.conv3d(v, t.constant(wc), kNoVar, {1, 2, 2}, {1, 1, 1})));
      },
      xc));
  Tensor logits = random_tensor({5, 4}, rng.child("ctc"), -1.5, 1.5);
  std::vector<int> target{1, 2};
  track(grad_check(
      [&](Tape& t, Var v) { return ctc_loss_op(t, v, target); }, logits));
  rep.check("layer gradient checks", worst <= 1e-4,
            "max relative error " + std::to_string(worst));

  // micro front-end: 2 frames, 4 landmarks, reduced widths
  FrontendDims dims;
  dims.landmarks = 4;
  dims.patch_size = 8;
  dims.fps_set = {8};
  dims.c1 = 1;
  dims.c2 = 2;
  dims.c3 = 2;
  dims.relpos_hidden = 3;
  dims.fusion_layers = 1;
  dims.fusion_heads = 1;
  dims.motion_dim = 2;
  dims.model_dim = 4;
  ParamStore store;
  Frontend fe;
  fe.init(store, Rng(5).child("micro"), dims);
  int64_t frames = 2;
  Tensor patches = random_tensor({4, 1, frames, 8, 8}, rng.child("patches"), 0.0, 1.0);
  Tensor relpos = random_tensor({1, frames, 4, 6}, rng.child("relpos"), -0.3, 0.3);
  Tensor motion = random_tensor({1, 8, frames}, rng.child("motion"), -0.2, 0.2);
  Tensor weights = random_tensor({1, frames, 4}, rng.child("w"));
  std::vector<int> pids;
  for (int pid = 0; pid < store.size(); ++pid) {
    if (store.trainable(pid)) pids.push_back(pid);
  }
  double err = param_grad_check(store, pids, [&](Tape& t) {
    FwdCtx ctx{t, store, /*training=*/true, /*frozen=*/false};
    Frontend::Output out = fe.forward(ctx, patches, relpos, motion, 1, frames);
    return t.sum_all(t.mul(out.h0, t.constant(weights)));
  });
  rep.check("micro front-end gradient", err <= 1e-4, "max relative error " + std::to_string(err));
}

void mi_closed_forms(Reporter& rep) {
  // JSD at F == 0
  {
    ParamStore store;
    ScoreNet f;
    f.init(store, Rng(3), "mi.f", 2, 2, 8);
    for (int pid : f.param_ids(store)) store.value_mut(pid).fill(0.0);
    Rng rng(9);
    Tensor xs = random_tensor({8, 2}, rng.child("xs"));
    Tensor ys = random_tensor({8, 2}, rng.child("ys"));
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    double est = t.val(f.estimate(ctx, t.constant(xs), t.constant(ys)))[0];
    double expect = -2.0 * std::log(2.0);
    rep.check("jsd estimate at zero score", std::fabs(est - expect) <= 1e-9,
              "estimate " + std::to_string(est));
  }
  // vclub with q ignoring x
  {
    ParamStore store;
    VariationalNet q;
    q.init(store, Rng(4), "mi.q", 3, 8, 2);
    for (int pid : q.param_ids(store)) store.value_mut(pid).fill(0.0);
    Rng rng(11);
    Tensor xs = random_tensor({8, 3}, rng.child("xs"));
    Tensor ys = random_tensor({8, 2}, rng.child("ys"));
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    double est = t.val(q.estimate(ctx, t.constant(xs), t.constant(ys)))[0];
    rep.check("vclub estimate with constant q", est == 0.0, "estimate " + std::to_string(est));
  }
}

}  // namespace

bool run_selftest(std::ostream& out) {
  Reporter rep{out};
  ctc_oracle_grid(rep);
  gradient_checks(rep);
  mi_closed_forms(rep);
  out << (rep.all_ok ? "selftest: all checks passed\n" : "selftest: FAILURES\n");
  return rep.all_ok;
}

}  // namespace lipmark
