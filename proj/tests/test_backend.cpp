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

#include "conformer.hpp"

using namespace lipmark;

namespace {
Tensor random_tensor(Shape shape, Rng rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

ConformerDims micro_dims(int blocks) {
  ConformerDims d;
  d.blocks = blocks;
  d.model_dim = 8;
  d.ff_dim = 16;
  d.heads = 2;
  d.depthwise_kernel = 5;
  return d;
}
}  // namespace

TEST_CASE("conformer preserves shape and is deterministic") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(7), micro_dims(3));
  Rng rng(3);
  Tensor x = random_tensor({2, 6, 8}, rng);
  auto run = [&] {
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    return t.val(conf.forward(ctx, t.constant(x)));
  };
  Tensor y1 = run();
  Tensor y2 = run();
  CHECK(y1.shape() == Shape{2, 6, 8});
  CHECK(y1.same_values(y2));
  CHECK(y1.all_finite());
}

TEST_CASE("zero blocks act as identity") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(7), micro_dims(0));
  Rng rng(5);
  Tensor x = random_tensor({1, 4, 8}, rng);
  Tape t(false);
  FwdCtx ctx{t, store, false, true};
  CHECK(t.val(conf.forward(ctx, t.constant(x))).same_values(x));
}

TEST_CASE("single frame input is valid") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(9), micro_dims(2));
  Rng rng(11);
  Tensor x = random_tensor({1, 1, 8}, rng);
  Tape t(false);
  FwdCtx ctx{t, store, true, true};
  Tensor y = t.val(conf.forward(ctx, t.constant(x)));
  CHECK(y.shape() == Shape{1, 1, 8});
  CHECK(y.all_finite());
}

TEST_CASE("attention is bidirectional: last frame influences the first") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(13), micro_dims(1));
  Rng rng(17);
  Tensor x = random_tensor({1, 6, 8}, rng);
  Tensor x2 = x;
  x2[5 * 8 + 3] += 0.5;  // change the last frame
  auto run = [&](const Tensor& in) {
    Tape t(false);
    FwdCtx ctx{t, store, false, true};
    return t.val(conf.forward(ctx, t.constant(in)));
  };
  Tensor y1 = run(x);
  Tensor y2 = run(x2);
  bool first_changed = false;
  for (int64_t j = 0; j < 8; ++j) first_changed = first_changed || y1[j] != y2[j];
  CHECK(first_changed);
}

TEST_CASE("conformer block gradient check at micro dims") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(19), micro_dims(1));
  Rng rng(23);
  Tensor x = random_tensor({1, 4, 8}, rng);
  Tensor w = random_tensor({1, 4, 8}, rng.child("w"));
  std::vector<int> pids;
  for (int pid = 0; pid < store.size(); ++pid) {
    if (store.trainable(pid)) pids.push_back(pid);
  }
  double err = param_grad_check(store, pids, [&](Tape& t) {
    FwdCtx ctx{t, store, /*training=*/true, /*frozen=*/false};
    return t.sum_all(t.mul(conf.forward(ctx, t.constant(x)), t.constant(w)));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("width mismatch is rejected") {
  ParamStore store;
  Conformer conf;
  conf.init(store, Rng(29), micro_dims(1));
  Tape t(false);
  FwdCtx ctx{t, store, false, true};
  Var bad = t.constant(Tensor(Shape{1, 4, 6}, 0.0));
  CHECK_THROWS_AS(conf.forward(ctx, bad), Error);
}
