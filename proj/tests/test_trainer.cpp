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

#include "evaluate.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

using namespace lipmark;

namespace {

// Small corpus and model for fast training-path tests.
Config tiny_config() {
  Config cfg;
  cfg.set("seed", "7");
  cfg.set("corpus.speakers", "2");
  cfg.set("corpus.samples_per_speaker", "6");
  cfg.set("corpus.frames", "64");
  cfg.set("model.tubelet_channels", "1,2,4");
  cfg.set("model.relpos_hidden", "6");
  cfg.set("model.fusion_layers", "1");
  cfg.set("model.fusion_heads", "1");
  cfg.set("model.motion_dim", "4");
  cfg.set("model.model_dim", "16");
  cfg.set("model.conformer_blocks", "1");
  cfg.set("model.conformer_ff", "32");
  cfg.set("model.conformer_heads", "2");
  cfg.set("model.decoder_layers", "1");
  cfg.set("model.decoder_ff", "32");
  cfg.set("model.decoder_heads", "2");
  cfg.set("model.speaker_hidden", "8");
  cfg.set("train.batch_size", "4");
  cfg.set("train.total_steps", "40");
  cfg.set("train.warmup_steps", "4");
  cfg.set("train.mi_hidden", "16");
  cfg.set("split.dev_fraction", "0");
  return cfg;
}

struct Setup {
  Corpus corpus;
  DatasetSplit split;
  LipModel model;
  TrainConfig tc;
};

std::shared_ptr<Setup> make_setup(const Config& cfg) {
  auto s = std::make_shared<Setup>();
  CorpusConfig cc;
  cc.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  cc.speakers = static_cast<int>(cfg.get_int("corpus.speakers"));
  cc.samples_per_speaker = static_cast<int>(cfg.get_int("corpus.samples_per_speaker"));
  cc.frames = cfg.get_int("corpus.frames");
  cc.noise = cfg.get_double("corpus.noise");
  s->corpus = Corpus::generate(cc);
  s->split.train.resize(s->corpus.samples.size());
  for (size_t i = 0; i < s->split.train.size(); ++i) s->split.train[i] = static_cast<int>(i);
  s->model.init(ModelConfig::from_config(cfg, cc.speakers));
  s->tc = TrainConfig::from_config(cfg);
  return s;
}

}  // namespace

TEST_CASE("learning-rate schedule closed forms") {
  CHECK(lr_schedule(0, 10, 100, 3e-4) == 0.0);
  CHECK(lr_schedule(10, 10, 100, 3e-4) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(lr_schedule(100, 10, 100, 3e-4) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lr_schedule(55, 10, 100, 3e-4) == doctest::Approx(3e-4 * 0.5).epsilon(1e-9));
  CHECK_THROWS_AS(lr_schedule(101, 10, 100, 3e-4), Error);
}

TEST_CASE("stage one step runs, logs finite losses, and is deterministic") {
  Config cfg = tiny_config();
  auto a = make_setup(cfg);
  auto b = make_setup(cfg);
  Trainer ta(a->model, a->tc, a->corpus, a->split);
  Trainer tb(b->model, b->tc, b->corpus, b->split);
  std::vector<int> batch{0, 1, 6, 7};
  StepMetrics ma = ta.stage1_step(batch);
  StepMetrics mb = tb.stage1_step(batch);
  CHECK(std::isfinite(ma.total));
  CHECK(ma.l_ctc > 0.0);
  CHECK(ma.l_ce > 0.0);
  CHECK(ma.l_id > 0.0);
  CHECK(ma.total == mb.total);
  // identical parameter bytes after the same step
  CHECK(a->model.store().content_hash(a->model.store().with_prefix("")) ==
        b->model.store().content_hash(b->model.store().with_prefix("")));

  // Eq. arithmetic: total == lambda*ctc + (1-lambda)*ce + alpha1*id
  double expect = a->model.config().lambda_ctc * ma.l_ctc +
                  (1.0 - a->model.config().lambda_ctc) * ma.l_ce + a->tc.alpha1 * ma.l_id;
  CHECK(ma.total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("thread count does not change training results") {
  Config cfg = tiny_config();
  auto a = make_setup(cfg);
  auto b = make_setup(cfg);
  Trainer ta(a->model, a->tc, a->corpus, a->split);
  Trainer tb(b->model, b->tc, b->corpus, b->split);
  std::vector<int> batch{0, 3, 5, 9};
  set_thread_count(1);
  StepMetrics ma = ta.stage1_step(batch);
  set_thread_count(2);
  StepMetrics mb = tb.stage1_step(batch);
  set_thread_count(1);
  CHECK(ma.total == mb.total);
  CHECK(a->model.store().content_hash(a->model.store().with_prefix("")) ==
        b->model.store().content_hash(b->model.store().with_prefix("")));
}

TEST_CASE("alpha1 = 0 reduces to the pure VSR gradient") {
  Config cfg = tiny_config();
  auto a = make_setup(cfg);
  auto b = make_setup(cfg);
  Config cfg0 = cfg;
  cfg0.set("train.alpha1", "0");
  b->tc = TrainConfig::from_config(cfg0);
  // c: alpha1 > 0 for contrast
  auto c = make_setup(cfg);

  // manual VSR-only update for b's expectation is impractical; instead verify
  // that alpha1=0 and the default differ, and alpha1=0 twice agrees
  auto b2 = make_setup(cfg0);
  b2->tc = TrainConfig::from_config(cfg0);
  Trainer trb(b->model, b->tc, b->corpus, b->split);
  Trainer trb2(b2->model, b2->tc, b2->corpus, b2->split);
  Trainer trc(c->model, c->tc, c->corpus, c->split);
  std::vector<int> batch{0, 1, 6, 7};
  // two steps: the warmup schedule makes the very first step a zero-lr one
  trb.stage1_step(batch);
  trb.stage1_step(batch);
  trb2.stage1_step(batch);
  trb2.stage1_step(batch);
  trc.stage1_step(batch);
  trc.stage1_step(batch);
  auto all = b->model.store().with_prefix("");
  CHECK(b->model.store().content_hash(all) == b2->model.store().content_hash(all));
  // speaker classifier received no gradient with alpha1 = 0: the VSR loss
  // does not touch it, so its bytes stay at initialization
  auto cls = b->model.store().with_prefix("speaker.cls");
  auto init = make_setup(cfg0);
  CHECK(b->model.store().content_hash(cls) == init->model.store().content_hash(cls));
  CHECK(c->model.store().content_hash(cls) != init->model.store().content_hash(cls));
}

TEST_CASE("stage two freezes the speaker head and fits the estimators") {
  Config cfg = tiny_config();
  auto s = make_setup(cfg);
  Trainer tr(s->model, s->tc, s->corpus, s->split);
  std::vector<int> batch{0, 1, 6, 7};
  tr.stage1_step(batch);

  // force the stage transition through run(): emulate by checkpoint round trip
  Checkpoint ck = tr.make_checkpoint("");
  ck.stage = 2;
  tr.restore(ck);

  auto spk = s->model.speaker_param_ids();
  uint64_t spk_hash = s->model.store().content_hash(spk);
  auto mi = s->model.mi_param_ids();
  uint64_t mi_hash = s->model.store().content_hash(mi);

  StepMetrics m = tr.stage2_step(batch);
  CHECK(std::isfinite(m.total));
  CHECK(m.l_min_mi != 0.0);
  CHECK(s->model.store().content_hash(spk) == spk_hash);  // frozen bytes
  CHECK(s->model.store().content_hash(mi) != mi_hash);    // estimators fit

  // Eq. arithmetic: total == vsr + alpha2 * (minMI + maxMI)
  double vsr = s->model.config().lambda_ctc * m.l_ctc +
               (1.0 - s->model.config().lambda_ctc) * m.l_ce;
  CHECK(m.total == doctest::Approx(vsr + s->tc.alpha2 * (m.l_min_mi + m.l_max_mi)).epsilon(1e-9));

  // with use_mi off the MI terms vanish structurally
  Config cfg_nomi = tiny_config();
  cfg_nomi.set("train.use_mi", "false");
  auto s2 = make_setup(cfg_nomi);
  Trainer tr2(s2->model, s2->tc, s2->corpus, s2->split);
  Checkpoint ck2 = tr2.make_checkpoint("");
  ck2.stage = 2;
  tr2.restore(ck2);
  uint64_t mi_hash2 = s2->model.store().content_hash(s2->model.mi_param_ids());
  StepMetrics m2 = tr2.stage2_step(batch);
  CHECK(m2.l_min_mi == 0.0);
  CHECK(m2.l_max_mi == 0.0);
  CHECK(s2->model.store().content_hash(s2->model.mi_param_ids()) == mi_hash2);
}

TEST_CASE("resuming from a checkpoint reproduces the next step bit-exactly") {
  Config cfg = tiny_config();
  auto a = make_setup(cfg);
  Trainer tra(a->model, a->tc, a->corpus, a->split);
  std::vector<int> b1{0, 1, 6, 7}, b2{2, 3, 8, 9}, b3{4, 5, 10, 11};
  tra.stage1_step(b1);
  tra.stage1_step(b2);
  Checkpoint ck = tra.make_checkpoint("cfg");
  StepMetrics next = tra.stage1_step(b3);
  uint64_t hash_after = a->model.store().content_hash(a->model.store().with_prefix(""));

  auto b = make_setup(cfg);
  Trainer trb(b->model, b->tc, b->corpus, b->split);
  trb.restore(ck);
  CHECK(trb.step() == 2);
  StepMetrics redo = trb.stage1_step(b3);
  CHECK(redo.total == next.total);
  CHECK(b->model.store().content_hash(b->model.store().with_prefix("")) == hash_after);

  // file round trip preserves every byte of state
  std::string path = "/tmp/lipmark_ck_test.bin";
  ck.save(path);
  Checkpoint loaded = Checkpoint::load(path);
  CHECK(loaded.step == ck.step);
  CHECK(loaded.config_text == ck.config_text);
  auto c = make_setup(cfg);
  Trainer trc(c->model, c->tc, c->corpus, c->split);
  trc.restore(loaded);
  StepMetrics redo2 = trc.stage1_step(b3);
  CHECK(redo2.total == next.total);
}

TEST_CASE("inference path never touches the speaker branch") {
  Config cfg = tiny_config();
  auto s = make_setup(cfg);
  const Sample& sample = s->corpus.samples[0];
  // audit the tape built by the inference encode
  std::vector<const Sample*> one{&sample};
  LipModel::Batch batch = s->model.prepare_batch(one, s->model.config().frontend.patch_size);
  Tape tape(false);
  FwdCtx ctx{tape, s->model.store(), false, true};
  s->model.encode(ctx, batch);
  auto speaker_pids = s->model.speaker_param_ids();
  for (int pid : tape.touched_pids()) {
    for (int spk : speaker_pids) CHECK(pid != spk);
  }
  CHECK(!tape.touched_pids().empty());
}

TEST_CASE("loss decreases over stage-one training on a tiny overfit set") {
  for (uint64_t seed : {3ull, 4ull, 5ull}) {
    Config cfg = tiny_config();
    cfg.set("seed", std::to_string(seed));
    cfg.set("train.lr", "1e-3");
    cfg.set("train.total_steps", "80");
    auto s = make_setup(cfg);
    Trainer tr(s->model, s->tc, s->corpus, s->split);
    double first = 0.0, last = 0.0;
    int steps = 60;
    for (int i = 0; i < steps; ++i) {
      std::vector<int> batch;
      Rng rng = Rng(seed).child("batch", static_cast<uint64_t>(i));
      for (int k = 0; k < 4; ++k) {
        batch.push_back(static_cast<int>(rng.below(s->corpus.samples.size())));
      }
      StepMetrics m = tr.stage1_step(batch);
      if (i < 10) first += m.total / 10.0;
      if (i >= steps - 10) last += m.total / 10.0;
    }
    CHECK(last < first);
  }
}
