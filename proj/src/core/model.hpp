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

#include <memory>

#include "checkpoint.hpp"
#include "config.hpp"
#include "conformer.hpp"
#include "corpus.hpp"
#include "ctc.hpp"
#include "decoder.hpp"
#include "frontend.hpp"
#include "mi.hpp"
#include "speaker.hpp"
#include "vocab.hpp"

namespace lipmark {

struct ModelConfig {
  FrontendDims frontend;
  ConformerDims conformer;
  DecoderDims decoder;
  int64_t speaker_hidden = 16;
  int speakers = 8;
  int64_t mi_hidden = 64;
  double lambda_ctc = 0.1;
  uint64_t init_seed = 7;

  static ModelConfig from_config(const Config& cfg, int speakers);
};

// Full lip-reading model: front-end, conformer, CTC head, transformer
// decoder, speaker branch and MI estimators, all sharing one parameter store.
class LipModel {
 public:
  void init(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const Vocab& vocab() const { return vocab_; }
  SpeakerHead& speaker() { return speaker_; }
  VariationalNet& vclub_q() { return vclub_q_; }
  ScoreNet& jsd_f() { return jsd_f_; }
  const Frontend& frontend() const { return frontend_; }
  const Conformer& conformer() const { return conformer_; }
  const TransformerDecoder& decoder() const { return decoder_; }

  struct Batch {
    Tensor patches;  // [B*K_eff, 1, T, P, P]
    Tensor relpos;   // [B, T, K, 2(K-1)]
    Tensor motion;   // [B, geom, T]
    std::vector<std::vector<int>> targets;  // token ids, no sos/eos
    std::vector<int> speakers;
    std::vector<std::string> transcripts;
    int64_t size = 0, frames = 0;
  };

  // Renders clips and extracts constant input features for a batch.
  Batch prepare_batch(const std::vector<const Sample*>& samples, int window) const;

  struct Encoded {
    Var h0;   // front-end features [B, T, D] (positional encoding not included)
    Var hlb;  // conformer output [B, T, D]
    std::vector<Tensor> fusion_attn;  // per fusion layer [B*T, heads, K, K]
  };
  Encoded encode(const FwdCtx& ctx, const Batch& batch, bool keep_attention = false) const;

  struct VsrLoss {
    Var ctc;  // batch-mean CTC loss
    Var ce;   // batch-mean label-smoothed-free CE loss
    Var vsr;  // lambda * ctc + (1 - lambda) * ce
  };
  VsrLoss vsr_loss(const FwdCtx& ctx, const Encoded& enc, const Batch& batch) const;

  // Inference encode for one sample (no gradient, no speaker branch);
  // returns the conformer output values [T, D].
  Tensor encode_sample(const Sample& sample) const;
  BeamHypothesis decode_sample(const Sample& sample, int beam_width, int max_len) const;

  // Attention maps of the fusion module for one sample:
  // [layers][heads][T][K][K] flattened per layer.
  std::vector<Tensor> attention_maps(const Sample& sample) const;

  // Checkpoint glue: parameter table <-> store.
  std::map<std::string, Tensor> export_params() const;
  void import_params(const std::map<std::string, Tensor>& table);

  std::vector<int> speaker_param_ids() const { return store_.with_prefix("speaker."); }
  std::vector<int> mi_param_ids() const { return store_.with_prefix("mi."); }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Vocab vocab_;
  Frontend frontend_;
  Conformer conformer_;
  int ctc_head_w = -1, ctc_head_b = -1;
  TransformerDecoder decoder_;
  SpeakerHead speaker_;
  VariationalNet vclub_q_;
  ScoreNet jsd_f_;
};

}  // namespace lipmark
