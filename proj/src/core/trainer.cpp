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

#include "trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wer.hpp"

namespace lipmark {

namespace fs = std::filesystem;

double lr_schedule(int64_t step, int64_t warmup, int64_t total, double lr0) {
  LIPMARK_CHECK(step >= 0 && step <= total, ErrorCode::kInvalidArgument,
                "schedule step out of range");
  LIPMARK_CHECK(warmup < total, ErrorCode::kInvalidArgument, "warmup must be below total");
  if (warmup > 0 && step < warmup) {
    return lr0 * static_cast<double>(step) / static_cast<double>(warmup);
  }
  double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig tc;
  tc.alpha1 = cfg.get_double("train.alpha1");
  tc.alpha2 = cfg.get_double("train.alpha2");
  LIPMARK_CHECK(tc.alpha1 >= 0.0 && tc.alpha1 <= 1.0 && tc.alpha2 >= 0.0 && tc.alpha2 <= 1.0,
                ErrorCode::kParse, "train.alpha1/alpha2 must be in [0,1]");
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  tc.lr = cfg.get_double("train.lr");
  tc.warmup_steps = cfg.get_int("train.warmup_steps");
  tc.total_steps = cfg.get_int("train.total_steps");
  LIPMARK_CHECK(tc.warmup_steps < tc.total_steps, ErrorCode::kParse,
                "train.warmup_steps must be below train.total_steps");
  tc.grad_clip = cfg.get_double("train.grad_clip");
  tc.use_mi = cfg.get_bool("train.use_mi");
  tc.stage1_cap_fraction = cfg.get_double("train.stage1_cap_fraction");
  tc.plateau_epsilon = cfg.get_double("train.plateau_epsilon");
  tc.plateau_epochs = static_cast<int>(cfg.get_int("train.plateau_epochs"));
  tc.dev_wer_samples = static_cast<int>(cfg.get_int("train.dev_wer_samples"));
  tc.dev_fraction = cfg.get_double("split.dev_fraction");
  tc.target_train_wer = cfg.get_double("train.target_train_wer");
  tc.wer_check_steps = static_cast<int>(cfg.get_int("train.wer_check_steps"));
  tc.mi_lr = cfg.get_double("train.mi_lr");
  tc.beam_width = static_cast<int>(cfg.get_int("decode.beam_width"));
  tc.max_decode_len = static_cast<int>(cfg.get_int("decode.max_len"));
  tc.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  return tc;
}

Trainer::Trainer(LipModel& model, const TrainConfig& cfg, const Corpus& corpus,
                 const DatasetSplit& split)
    : model_(model), cfg_(cfg), corpus_(corpus), opt_(cfg.lr), mi_q_opt_(cfg.mi_lr),
      mi_f_opt_(cfg.mi_lr) {
  // carve a held-in dev slice off the training set (deterministic shuffle)
  std::vector<int> order = split.train;
  Rng rng = Rng(cfg.seed).child("dev_split");
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
  }
  size_t dev_count = static_cast<size_t>(cfg.dev_fraction * static_cast<double>(order.size()));
  dev_count = std::min(dev_count, order.size() > 1 ? order.size() - 1 : size_t{0});
  dev_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_count));
  train_.assign(order.begin() + static_cast<std::ptrdiff_t>(dev_count), order.end());
  std::sort(dev_.begin(), dev_.end());
  std::sort(train_.begin(), train_.end());
  LIPMARK_CHECK(static_cast<int>(train_.size()) >= cfg.batch_size, ErrorCode::kInvalidArgument,
                "training split smaller than one batch");
}

int Trainer::draw_window(uint64_t step) const {
  const FrontendDims& fe = model_.config().frontend;
  if (!fe.fps_enabled || fe.fps_set.empty()) return fe.patch_size;
  Rng rng = Rng(cfg_.seed).child("fps", step);
  return static_cast<int>(fe.fps_set[rng.below(fe.fps_set.size())]);
}

StepMetrics Trainer::stage1_step(const std::vector<int>& batch_indices) {
  LIPMARK_CHECK(stage_ == 1, ErrorCode::kInvalidArgument, "stage1_step outside stage I");
  return do_step(batch_indices, false);
}

StepMetrics Trainer::stage2_step(const std::vector<int>& batch_indices) {
  LIPMARK_CHECK(stage_ == 2, ErrorCode::kInvalidArgument, "stage2_step outside stage II");
  return do_step(batch_indices, true);
}

StepMetrics Trainer::do_step(const std::vector<int>& batch_indices, bool stage2) {
  std::vector<const Sample*> samples;
  samples.reserve(batch_indices.size());
  for (int idx : batch_indices) {
    samples.push_back(&corpus_.samples[static_cast<size_t>(idx)]);
  }
  int window = draw_window(step_);
  LipModel::Batch batch = model_.prepare_batch(samples, window);

  Tape tape(true);
  FwdCtx ctx{tape, model_.store(), /*training=*/true, /*frozen=*/false};
  LipModel::Encoded enc = model_.encode(ctx, batch);
  LipModel::VsrLoss vsr = model_.vsr_loss(ctx, enc, batch);

  StepMetrics m;
  m.step = step_;
  m.stage = stage2 ? 2 : 1;
  m.l_ctc = tape.val(vsr.ctc)[0];
  m.l_ce = tape.val(vsr.ce)[0];

  Var loss = vsr.vsr;
  if (!stage2) {
    SpeakerHead::Output spk = model_.speaker().forward(ctx, enc.h0);
    Var l_id = model_.speaker().loss(ctx, spk.log_probs, batch.speakers);
    m.l_id = tape.val(l_id)[0];
    m.spk_acc = SpeakerHead::accuracy(tape.val(spk.log_probs), batch.speakers);
    loss = tape.add(loss, tape.scale(l_id, cfg_.alpha1));
  } else {
    // frozen speaker branch still produces the identity features
    FwdCtx spk_ctx{tape, model_.store(), /*training=*/false, /*frozen=*/true};
    SpeakerHead::Output spk = model_.speaker().forward(spk_ctx, enc.h0);
    m.spk_acc = SpeakerHead::accuracy(tape.val(spk.log_probs), batch.speakers);
    if (cfg_.use_mi) {
      Var pooled_hlb = tape.mean_axis(enc.hlb, 1);
      Var pooled_h0 = tape.mean_axis(enc.h0, 1);
      // (a) one ascent step for each estimator on detached features
      Tensor h_id_v = tape.val(spk.h_id);
      Tensor hlb_v = tape.val(pooled_hlb);
      Tensor h0_v = tape.val(pooled_h0);
      fit_variational_step(model_.store(), model_.vclub_q(), mi_q_opt_, h_id_v, hlb_v);
      fit_score_step(model_.store(), model_.jsd_f(), mi_f_opt_, h0_v, hlb_v);
      // (b) regularize the model against the freshly fit estimators
      FwdCtx mi_ctx{tape, model_.store(), /*training=*/false, /*frozen=*/true};
      Var l_min = model_.vclub_q().estimate(mi_ctx, spk.h_id, pooled_hlb);
      Var l_max = tape.neg(model_.jsd_f().estimate(mi_ctx, pooled_h0, pooled_hlb));
      m.l_min_mi = tape.val(l_min)[0];
      m.l_max_mi = tape.val(l_max)[0];
      loss = tape.add(loss, tape.scale(tape.add(l_min, l_max), cfg_.alpha2));
    }
  }
  m.total = tape.val(loss)[0];
  if (!std::isfinite(m.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step_ << " (ctc=" << m.l_ctc << " ce=" << m.l_ce
       << " id=" << m.l_id << " minMI=" << m.l_min_mi << " maxMI=" << m.l_max_mi << ")";
    throw_error(ErrorCode::kInternal, os.str());
  }

  tape.backward(loss);
  double lr_now = lr_schedule(static_cast<int64_t>(step_), cfg_.warmup_steps, cfg_.total_steps,
                              cfg_.lr);
  m.lr = lr_now;
  opt_.step(model_.store(), tape.param_grads(), lr_now / cfg_.lr, cfg_.grad_clip);
  ++step_;
  if (on_step) on_step(m);
  return m;
}

void Trainer::begin_stage2() {
  stage_ = 2;
  for (int pid : model_.speaker_param_ids()) model_.store().set_trainable(pid, false);
}

std::vector<int> Trainer::epoch_order(uint64_t epoch) const {
  std::vector<int> order = train_;
  Rng rng = Rng(cfg_.seed).child("shuffle", epoch);
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
  }
  return order;
}

double Trainer::wer_over(const std::vector<int>& indices, int limit) const {
  int64_t errors = 0, words = 0;
  size_t count = indices.size();
  if (limit > 0) count = std::min(count, static_cast<size_t>(limit));
  for (size_t i = 0; i < count; ++i) {
    const Sample& s = corpus_.samples[static_cast<size_t>(indices[i])];
    BeamHypothesis hyp = model_.decode_sample(s, cfg_.beam_width, cfg_.max_decode_len);
    WerBreakdown w = edit_alignment(s.transcript, model_.vocab().decode(hyp.tokens));
    errors += w.errors();
    words += w.ref_words;
  }
  return words > 0 ? 100.0 * static_cast<double>(errors) / static_cast<double>(words) : 0.0;
}

RunReport Trainer::run(const std::string& out_dir, const std::string& config_text) {
  RunReport report;
  std::ofstream metrics;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics.open(fs::path(out_dir) / "metrics.tsv");
    metrics << "# step stage lr l_ctc l_ce l_id l_minMI l_maxMI spk_acc\n";
  }
  auto log_metrics = [&](const StepMetrics& m) {
    if (!metrics.is_open()) return;
    char line[256];
    std::snprintf(line, sizeof(line), "%llu %d %.8g %.8g %.8g %.8g %.8g %.8g %.6g\n",
                  static_cast<unsigned long long>(m.step), m.stage, m.lr, m.l_ctc, m.l_ce, m.l_id,
                  m.l_min_mi, m.l_max_mi, m.spk_acc);
    metrics << line;
  };

  uint64_t stage1_cap = static_cast<uint64_t>(
      cfg_.stage1_cap_fraction * static_cast<double>(cfg_.total_steps));
  int64_t steps_per_epoch = static_cast<int64_t>(train_.size()) / cfg_.batch_size;
  LIPMARK_CHECK(steps_per_epoch > 0, ErrorCode::kInvalidArgument, "batch larger than train set");

  double last_plateau_acc = -1.0;
  int plateau_count = 0;
  bool stopped = false;

  auto stage_transition = [&]() {
    report.stage1_steps = step_;
    begin_stage2();
    if (!out_dir.empty()) {
      make_checkpoint(config_text).save((fs::path(out_dir) / "ckpt_stage1.bin").string());
    }
  };

  // when resuming, continue from the position implied by the step counter
  uint64_t first_epoch = step_ / static_cast<uint64_t>(steps_per_epoch);
  int64_t skip_batches = static_cast<int64_t>(step_ % static_cast<uint64_t>(steps_per_epoch));

  for (uint64_t epoch = first_epoch;
       !stopped && step_ < static_cast<uint64_t>(cfg_.total_steps); ++epoch) {
    std::vector<int> order = epoch_order(epoch);
    double epoch_acc_sum = 0.0;
    int epoch_acc_count = 0;
    int64_t b0 = epoch == first_epoch ? skip_batches : 0;
    for (int64_t b = b0; b < steps_per_epoch && step_ < static_cast<uint64_t>(cfg_.total_steps);
         ++b) {
      if (stage_ == 1 && stage1_cap > 0 && step_ >= stage1_cap) {
        stage_transition();
      }
      std::vector<int> batch(order.begin() + b * cfg_.batch_size,
                             order.begin() + (b + 1) * cfg_.batch_size);
      StepMetrics m = do_step(batch, stage_ == 2);
      log_metrics(m);
      epoch_acc_sum += m.spk_acc;
      ++epoch_acc_count;
      if (cfg_.target_train_wer >= 0.0 && cfg_.wer_check_steps > 0 &&
          step_ % static_cast<uint64_t>(cfg_.wer_check_steps) == 0) {
        double train_wer = wer_over(train_, 64);
        if (train_wer <= cfg_.target_train_wer) {
          report.final_train_wer = train_wer;
          report.early_stopped = true;
          stopped = true;
          break;
        }
      }
    }
    // epoch-end bookkeeping on the held-in dev slice
    EpochStats es;
    es.epoch = static_cast<int>(epoch);
    es.stage = stage_;
    if (!dev_.empty()) {
      std::vector<const Sample*> devs;
      for (int idx : dev_) devs.push_back(&corpus_.samples[static_cast<size_t>(idx)]);
      LipModel::Batch devb = model_.prepare_batch(devs, model_.config().frontend.patch_size);
      Tape tape(false);
      FwdCtx ctx{tape, model_.store(), /*training=*/false, /*frozen=*/true};
      LipModel::Encoded enc = model_.encode(ctx, devb);
      SpeakerHead::Output spk = model_.speaker().forward(ctx, enc.h0);
      es.dev_spk_acc = SpeakerHead::accuracy(tape.val(spk.log_probs), devb.speakers);
      es.dev_wer = wer_over(dev_, cfg_.dev_wer_samples);
      if (best_dev_wer_ < 0.0 || es.dev_wer < best_dev_wer_) {
        best_dev_wer_ = es.dev_wer;
        if (!out_dir.empty()) {
          make_checkpoint(config_text).save((fs::path(out_dir) / "ckpt_best.bin").string());
        }
      }
    } else {
      es.dev_spk_acc = epoch_acc_count > 0 ? epoch_acc_sum / epoch_acc_count : 0.0;
    }
    report.epochs.push_back(es);

    // plateau rule for the stage transition
    if (stage_ == 1 && cfg_.plateau_epochs > 0) {
      double acc_pct = es.dev_spk_acc * 100.0;
      if (last_plateau_acc >= 0.0 && acc_pct - last_plateau_acc <= cfg_.plateau_epsilon) {
        ++plateau_count;
      } else {
        plateau_count = 0;
      }
      last_plateau_acc = std::max(last_plateau_acc, acc_pct);
      if (plateau_count >= cfg_.plateau_epochs) {
        stage_transition();
      }
    }
  }
  if (stage_ == 1) report.stage1_steps = step_;
  report.steps = step_;
  report.best_dev_wer = best_dev_wer_;
  if (report.final_train_wer < 0.0 && cfg_.target_train_wer >= 0.0) {
    report.final_train_wer = wer_over(train_, 64);
  }
  if (!out_dir.empty()) {
    make_checkpoint(config_text).save((fs::path(out_dir) / "ckpt_final.bin").string());
    std::ofstream rep(fs::path(out_dir) / "report.txt");
    rep << "steps " << report.steps << "\n";
    rep << "stage1_steps " << report.stage1_steps << "\n";
    for (const EpochStats& es : report.epochs) {
      rep << "epoch " << es.epoch << " stage " << es.stage << " dev_spk_acc " << es.dev_spk_acc
          << " dev_wer " << es.dev_wer << "\n";
    }
    rep << "best_dev_wer " << report.best_dev_wer << "\n";
    if (report.final_train_wer >= 0.0) rep << "final_train_wer " << report.final_train_wer << "\n";
  }
  return report;
}

Checkpoint Trainer::make_checkpoint(const std::string& config_text) const {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.params = model_.export_params();
  ck.step = step_;
  ck.stage = static_cast<uint32_t>(stage_);
  ck.seed = cfg_.seed;
  ck.adam_t = opt_.t();
  ck.best_dev_wer = best_dev_wer_;
  const ParamStore& store = model_.store();
  Adam& opt = const_cast<Adam&>(opt_);
  for (auto& [pid, m] : opt.moment1()) ck.opt_state.emplace("adam_m." + store.name(pid), m);
  for (auto& [pid, v] : opt.moment2()) ck.opt_state.emplace("adam_v." + store.name(pid), v);
  Adam& qo = const_cast<Adam&>(mi_q_opt_);
  for (auto& [pid, m] : qo.moment1()) ck.opt_state.emplace("adam_qm." + store.name(pid), m);
  for (auto& [pid, v] : qo.moment2()) ck.opt_state.emplace("adam_qv." + store.name(pid), v);
  ck.opt_state.emplace("adam_q_t", Tensor::scalar(static_cast<double>(mi_q_opt_.t())));
  Adam& fo = const_cast<Adam&>(mi_f_opt_);
  for (auto& [pid, m] : fo.moment1()) ck.opt_state.emplace("adam_fm." + store.name(pid), m);
  for (auto& [pid, v] : fo.moment2()) ck.opt_state.emplace("adam_fv." + store.name(pid), v);
  ck.opt_state.emplace("adam_f_t", Tensor::scalar(static_cast<double>(mi_f_opt_.t())));
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  model_.import_params(ck.params);
  step_ = ck.step;
  stage_ = static_cast<int>(ck.stage);
  best_dev_wer_ = ck.best_dev_wer;
  if (stage_ == 2) {
    for (int pid : model_.speaker_param_ids()) model_.store().set_trainable(pid, false);
  }
  const ParamStore& store = model_.store();
  auto load_into = [&](Adam& opt, const std::string& mkey, const std::string& vkey) {
    opt.moment1().clear();
    opt.moment2().clear();
    for (int pid = 0; pid < store.size(); ++pid) {
      auto it = ck.opt_state.find(mkey + store.name(pid));
      if (it != ck.opt_state.end()) opt.moment1().emplace(pid, it->second);
      auto iv = ck.opt_state.find(vkey + store.name(pid));
      if (iv != ck.opt_state.end()) opt.moment2().emplace(pid, iv->second);
    }
  };
  load_into(opt_, "adam_m.", "adam_v.");
  opt_.set_t(ck.adam_t);
  load_into(mi_q_opt_, "adam_qm.", "adam_qv.");
  load_into(mi_f_opt_, "adam_fm.", "adam_fv.");
  auto qt = ck.opt_state.find("adam_q_t");
  if (qt != ck.opt_state.end()) mi_q_opt_.set_t(static_cast<uint64_t>(qt->second[0]));
  auto ft = ck.opt_state.find("adam_f_t");
  if (ft != ck.opt_state.end()) mi_f_opt_.set_t(static_cast<uint64_t>(ft->second[0]));
}

}  // namespace lipmark
