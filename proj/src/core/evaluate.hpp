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

#include <map>

#include "model.hpp"
#include "trainer.hpp"
#include "wer.hpp"

namespace lipmark {

struct SampleResult {
  int index = 0;
  int speaker = 0;
  std::string reference;
  std::string hypothesis;
  WerBreakdown wer;
};

struct EvalReport {
  std::vector<SampleResult> results;
  WerBreakdown corpus;  // error counts aggregated over all samples
  std::map<int, WerBreakdown> per_speaker;
};

// Decodes every listed sample with beam search and aggregates corpus-level
// WER as total errors over total reference words.
EvalReport evaluate_model(const LipModel& model, const Corpus& corpus,
                          const std::vector<int>& indices, int beam_width, int max_len);

// Line-delimited decode records: index, reference, hypothesis, per-sample WER.
void write_decode_records(const std::string& path, const EvalReport& report);
// Text table (corpus + per-speaker rows) alongside the records.
void write_eval_report(const std::string& out_dir, const EvalReport& report);

struct AblationRow {
  std::string label;
  bool relpos = true, motion = true, mi = true;
  int tubelet_depth = 5;
  bool mouth_crop = false;
  double wer = -1.0;
  double delta_vs_full = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  double full_wer = -1.0;
  double womi_wer = -1.0;
  EvalReport full_eval;  // per-speaker breakdown for the full model
};

using ProgressFn = std::function<void(const std::string&)>;

// Trains and evaluates the mechanism-ablation grid (2^3 switch combinations
// plus the 2D-patch and mouth-crop variants) on the given split.
AblationReport run_ablation(const Config& base_cfg, const Corpus& corpus,
                            const DatasetSplit& split, const std::string& out_dir,
                            const ProgressFn& progress = nullptr);

std::string format_ablation_table(const AblationReport& report);

// Fusion attention export for one sample: a raw CSV with every
// (layer, head, frame, query, key) weight and a per-frame matrix averaged
// over heads and layers. Landmark labels use the 68-point indices 49..68.
void dump_attention_csv(const LipModel& model, const Sample& sample, const std::string& out_dir);

}  // namespace lipmark
