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

#include "nn.hpp"

namespace lipmark {

// Speaker identification branch (training-time only): batch norm, ReLU and a
// fully-connected layer produce the identity feature; a classifier over it
// yields per-speaker probabilities.
class SpeakerHead {
 public:
  void init(ParamStore& store, Rng rng, int64_t in_dim, int64_t id_dim, int speakers);

  struct Output {
    Var h_id;        // [B, id_dim]
    Var log_probs;   // [B, C]
  };

  // h0 [B, T, D]: temporal average pooling, then the MLP head + classifier.
  Output forward(const FwdCtx& ctx, Var h0) const;

  // mean -log p(true speaker)
  Var loss(const FwdCtx& ctx, Var log_probs, const std::vector<int>& speakers) const;

  static double accuracy(const Tensor& log_probs, const std::vector<int>& speakers);

  int speakers() const { return speakers_; }
  int64_t id_dim() const { return id_dim_; }

 private:
  BatchNormLayer bn_;
  Linear fc_;
  Linear classifier_;
  int speakers_ = 0;
  int64_t id_dim_ = 0;
};

}  // namespace lipmark
