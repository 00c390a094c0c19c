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

#include <functional>
#include <optional>
#include <string>

#include "model.hpp"
#include "optimizer.hpp"

namespace lipmark {

// Linear warmup to lr0 followed by cosine decay to zero.
double lr_schedule(int64_t step, int64_t warmup, int64_t total, double lr0);

struct TrainConfig {
  double alpha1 = 0.2;
  double alpha2 = 0.2;
  int batch_size = 8;
  double lr = 3e-4;
  int64_t warmup_steps = 60;
  int64_t total_steps = 600;
  double grad_clip = 5.0;
  bool use_mi = true;
  double stage1_cap_fraction = 0.4;
  double plateau_epsilon = 0.5;  // percentage points of speaker accuracy
  int plateau_epochs = 3;        // 0 disables the plateau rule
  int dev_wer_samples = 32;
  double dev_fraction = 0.1;
  double target_train_wer = -1.0;  // < 0 disables early stopping
  int wer_check_steps = 0;
  double mi_lr = 3e-4;
  int beam_width = 10;
  int max_decode_len = 40;
  uint64_t seed = 7;

  static TrainConfig from_config(const Config& cfg);
};

struct StepMetrics {
  uint64_t step = 0;
  int stage = 1;
  double lr = 0.0;
  double l_ctc = 0.0;
  double l_ce = 0.0;
  double l_id = 0.0;
  double l_min_mi = 0.0;
  double l_max_mi = 0.0;
  double spk_acc = 0.0;
  double total = 0.0;
};

struct EpochStats {
  int epoch = 0;
  int stage = 1;
  double dev_spk_acc = 0.0;
  double dev_wer = -1.0;
};

struct RunReport {
  std::vector<EpochStats> epochs;
  uint64_t stage1_steps = 0;
  uint64_t steps = 0;
  double final_train_wer = -1.0;
  double best_dev_wer = -1.0;
  bool early_stopped = false;
};

class Trainer {
 public:
  Trainer(LipModel& model, const TrainConfig& cfg, const Corpus& corpus,
          const DatasetSplit& split);

  // Single optimization steps over explicit sample indices (exposed for
  // tests); run() drives them through the two-stage schedule.
  StepMetrics stage1_step(const std::vector<int>& batch_indices);
  StepMetrics stage2_step(const std::vector<int>& batch_indices);

  // Full training loop with metrics + checkpoints under out_dir (pass an
  // empty string to skip file output). config_text is echoed into
  // checkpoints.
  RunReport run(const std::string& out_dir, const std::string& config_text);

  // Checkpoint round trip (includes optimizer state for bit-exact resume).
  Checkpoint make_checkpoint(const std::string& config_text) const;
  void restore(const Checkpoint& ck);

  uint64_t step() const { return step_; }
  int stage() const { return stage_; }
  const std::vector<int>& dev_indices() const { return dev_; }
  const std::vector<int>& train_indices() const { return train_; }

  double wer_over(const std::vector<int>& indices, int limit = 0) const;

  // hook invoked after every step (metrics logging)
  std::function<void(const StepMetrics&)> on_step;

 private:
  void begin_stage2();
  std::vector<int> epoch_order(uint64_t epoch) const;
  int draw_window(uint64_t step) const;
  StepMetrics do_step(const std::vector<int>& batch_indices, bool stage2);

  LipModel& model_;
  TrainConfig cfg_;
  const Corpus& corpus_;
  std::vector<int> train_, dev_;
  Adam opt_;
  Adam mi_q_opt_, mi_f_opt_;
  uint64_t step_ = 0;
  int stage_ = 1;
  double best_dev_wer_ = -1.0;
};

}  // namespace lipmark
