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

#include "speaker.hpp"

namespace lipmark {

void SpeakerHead::init(ParamStore& store, Rng rng, int64_t in_dim, int64_t id_dim, int speakers) {
  speakers_ = speakers;
  id_dim_ = id_dim;
  bn_.init(store, "speaker.bn", in_dim);
  fc_.init(store, rng.child("fc"), "speaker.fc", in_dim, id_dim);
  classifier_.init(store, rng.child("cls"), "speaker.cls", id_dim, speakers);
}

SpeakerHead::Output SpeakerHead::forward(const FwdCtx& ctx, Var h0) const {
  Tape& t = ctx.tape;
  Var pooled = t.mean_axis(h0, 1);  // GAP over time -> [B, D]
  Var x = bn_.forward(ctx, pooled, 1);
  x = t.relu(x);
  Output out;
  out.h_id = fc_.forward(ctx, x);
  out.log_probs = t.log_softmax_last(classifier_.forward(ctx, out.h_id));
  return out;
}

Var SpeakerHead::loss(const FwdCtx& ctx, Var log_probs, const std::vector<int>& speakers) const {
  Tape& t = ctx.tape;
  const Tensor& lp = t.val(log_probs);
  int64_t batch = lp.dim(0);
  LIPMARK_CHECK(static_cast<int64_t>(speakers.size()) == batch, ErrorCode::kDimension,
                "speaker label batch mismatch");
  std::vector<int64_t> picks(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    int c = speakers[static_cast<size_t>(i)];
    LIPMARK_CHECK(c >= 0 && c < speakers_, ErrorCode::kInvalidArgument,
                  "speaker id out of range: " + std::to_string(c));
    picks[static_cast<size_t>(i)] = i * speakers_ + c;
  }
  return t.neg(t.mean_all(t.gather_index(log_probs, std::move(picks))));
}

double SpeakerHead::accuracy(const Tensor& log_probs, const std::vector<int>& speakers) {
  int64_t batch = log_probs.dim(0), c = log_probs.dim(1);
  int64_t hits = 0;
  for (int64_t i = 0; i < batch; ++i) {
    const double* row = log_probs.data() + i * c;
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (best == speakers[static_cast<size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

}  // namespace lipmark
