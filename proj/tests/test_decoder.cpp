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

#include "ctc.hpp"
#include "decoder.hpp"
#include "optimizer.hpp"
#include "vocab.hpp"

using namespace lipmark;

namespace {
Tensor random_tensor(Shape shape, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("ctc closed forms") {
  // T=1, uniform over {blank,a,b}: loss = -ln(1/3)
  Tensor logits1(Shape{1, 3}, 0.0);
  CHECK(ctc_loss_value(logits1, {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // T=2, uniform over 3 symbols, target "a": paths {aa, a-, -a} -> -ln(3/9)
  Tensor logits2(Shape{2, 3}, 0.0);
  CHECK(ctc_loss_value(logits2, {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // repeated symbol needs a separating blank
  CHECK_THROWS_AS(ctc_loss_value(logits2, {1, 1}), Error);
  CHECK(ctc_min_frames({1, 1}) == 3);

  // near-one-hot logits: loss ~ 0 iff greedy collapse equals the target
  Tensor hot(Shape{3, 3}, -40.0);
  hot[0 * 3 + 1] = 40.0;  // a
  hot[1 * 3 + 0] = 40.0;  // blank
  hot[2 * 3 + 2] = 40.0;  // b
  CHECK(ctc_loss_value(hot, {1, 2}) <= 1e-6);
  CHECK(ctc_loss_value(hot, {2, 1}) >= 10.0);

  // empty target: probability of the all-blank path under uniform logits
  CHECK(ctc_loss_value(logits2, {}) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("ctc matches the exhaustive oracle on the small grid") {
  Rng rng(31337);
  double worst = 0.0;
  int checked = 0;
  for (int frames = 1; frames <= 5; ++frames) {
    for (int vocab = 2; vocab <= 4; ++vocab) {
      for (int len = 0; len <= 3; ++len) {
        for (int draw = 0; draw < 6; ++draw) {
          Rng r = rng.child("c", static_cast<uint64_t>((frames * 10 + vocab) * 10 + len),
                            static_cast<uint64_t>(draw));
          Tensor logits = random_tensor({frames, vocab}, r, -2.5, 2.5);
          std::vector<int> target;
          for (int i = 0; i < len; ++i) {
            target.push_back(1 + static_cast<int>(r.below(static_cast<uint64_t>(vocab - 1))));
          }
          if (ctc_min_frames(target) > frames) {
            CHECK(std::isinf(ctc_brute_force(logits, target)));
            CHECK_THROWS_AS(ctc_loss_value(logits, target), Error);
            continue;
          }
          double dp = ctc_loss_value(logits, target);
          double oracle = ctc_brute_force(logits, target);
          worst = std::max(worst, std::fabs(dp - oracle));
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 100);
  CHECK(worst <= 1e-9);
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(99);
  Tensor logits = random_tensor({6, 5}, rng, -1.5, 1.5);
  std::vector<int> target{1, 3, 1};
  double err = grad_check([&](Tape& t, Var v) { return ctc_loss_op(t, v, target); }, logits);
  CHECK(err <= 1e-4);
}

TEST_CASE("decoder causality and shapes") {
  Rng rng(4);
  ParamStore store;
  TransformerDecoder dec;
  DecoderDims dims;
  dims.layers = 2;
  dims.model_dim = 8;
  dims.ff_dim = 16;
  dims.heads = 2;
  dims.vocab = 40;
  dec.init(store, rng.child("dec"), dims);
  Vocab vocab;

  Tensor memory = random_tensor({1, 6, 8}, rng.child("mem"));
  std::vector<int> prefix{vocab.sos(), 5, 9, 12};
  Tape t(false);
  FwdCtx ctx{t, store, false, true};
  Var logits = dec.forward(ctx, {prefix}, t.constant(memory));
  CHECK(t.val(logits).shape() == Shape{1, 4, 40});

  // perturbing token j leaves logits at positions < j unchanged
  std::vector<int> perturbed = prefix;
  perturbed[2] = 20;
  Tape t2(false);
  FwdCtx ctx2{t2, store, false, true};
  Var logits2 = dec.forward(ctx2, {perturbed}, t2.constant(memory));
  const Tensor& a = t.val(logits);
  const Tensor& b = t2.val(logits2);
  for (int64_t pos = 0; pos < 2; ++pos) {
    for (int64_t v = 0; v < 40; ++v) {
      CHECK(a[pos * 40 + v] == b[pos * 40 + v]);
    }
  }
  bool later_changed = false;
  for (int64_t v = 0; v < 40; ++v) {
    later_changed = later_changed || a[2 * 40 + v] != b[2 * 40 + v];
  }
  CHECK(later_changed);
}

TEST_CASE("uniform logits give ln(V) cross entropy") {
  // closed form: -log(1/40)
  Tape t(false);
  Var logits = t.constant(Tensor(Shape{1, 3, 40}, 0.0));
  Var logp = t.log_softmax_last(logits);
  double want = std::log(40.0);
  const Tensor& lp = t.val(logp);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(-lp[i * 40 + 7] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("beam search on a model overfit to one short mapping") {
  Rng rng(12);
  ParamStore store;
  TransformerDecoder dec;
  DecoderDims dims;
  dims.layers = 1;
  dims.model_dim = 8;
  dims.ff_dim = 16;
  dims.heads = 2;
  dims.vocab = 40;
  dec.init(store, rng.child("dec"), dims);
  Vocab vocab;
  Tensor memory = random_tensor({4, 8}, rng.child("mem"));
  std::vector<int> target = vocab.encode("ab");

  Adam opt(3e-3);
  std::vector<std::vector<int>> prefixes{{vocab.sos(), target[0], target[1]}};
  std::vector<int64_t> picks{0 * 40 + target[0], 1 * 40 + target[1],
                             2 * 40 + vocab.eos()};
  for (int step = 0; step < 300; ++step) {
    Tape t(true);
    FwdCtx ctx{t, store, true, false};
    Tensor mem3 = memory.reshaped(Shape{1, 4, 8});
    Var logits = dec.forward(ctx, prefixes, t.constant(mem3));
    Var logp = t.log_softmax_last(logits);
    Var loss = t.neg(t.mean_all(t.gather_index(logp, picks)));
    t.backward(loss);
    opt.step(store, t.param_grads());
  }
  BeamHypothesis hyp = beam_search(dec, store, memory, vocab, 10, 8);
  CHECK(vocab.decode(hyp.tokens) == "ab");

  // width=1 equals greedy; score is monotone in width on this instance
  BeamHypothesis greedy = beam_search(dec, store, memory, vocab, 1, 8);
  CHECK(vocab.decode(greedy.tokens) == "ab");
  double prev = -1e30;
  for (int width = 1; width <= 4; ++width) {
    BeamHypothesis h = beam_search(dec, store, memory, vocab, width, 8);
    CHECK(h.score >= prev - 1e-12);
    prev = h.score;
  }
}

TEST_CASE("beam width monotonicity on random models") {
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    Rng rng(seed);
    ParamStore store;
    TransformerDecoder dec;
    DecoderDims dims;
    dims.layers = 1;
    dims.model_dim = 8;
    dims.ff_dim = 16;
    dims.heads = 2;
    dims.vocab = 40;
    dec.init(store, rng.child("dec"), dims);
    Vocab vocab;
    Tensor memory = random_tensor({3, 8}, rng.child("mem"));
    double prev = -1e30;
    for (int width = 1; width <= 4; ++width) {
      BeamHypothesis h = beam_search(dec, store, memory, vocab, width, 6);
      CHECK(h.score >= prev - 1e-12);
      prev = h.score;
    }
  }
}

TEST_CASE("vsr loss combination closed forms") {
  // lambda * ctc + (1 - lambda) * ce
  double l_ctc = 2.0, l_ce = 1.0, lambda = 0.1;
  CHECK(lambda * l_ctc + (1 - lambda) * l_ce == doctest::Approx(1.1));
}
