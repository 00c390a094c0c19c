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

#include <vector>

#include "nn.hpp"
#include "vocab.hpp"

namespace lipmark {

struct DecoderDims {
  int layers = 3;
  int64_t model_dim = 32;
  int64_t ff_dim = 128;
  int heads = 4;
  int vocab = 40;
};

// Autoregressive transformer decoder: token embedding plus sinusoidal
// positions, per block a causal self-attention, encoder cross-attention and
// feed-forward sublayer, each with residual + layer norm.
class TransformerDecoder {
 public:
  void init(ParamStore& store, Rng rng, const DecoderDims& dims);

  // prefixes [B, N] (token ids, sos first), memory [B, T, D] -> logits [B, N, V].
  Var forward(const FwdCtx& ctx, const std::vector<std::vector<int>>& prefixes, Var memory) const;

  const DecoderDims& dims() const { return dims_; }

 private:
  struct Block {
    MultiHeadAttention self_attn, cross_attn;
    LayerNormLayer ln1, ln2, ln3;
    Linear ff_a, ff_b;
  };

  DecoderDims dims_;
  int embed_ = -1;  // token embedding table [V, D]
  std::vector<Block> blocks_;
  Linear out_;
};

struct BeamHypothesis {
  std::vector<int> tokens;  // emitted tokens, eos excluded
  double log_prob = 0.0;
  double score = 0.0;  // length-normalized
};

// Left-to-right beam search over the decoder, attention scores only,
// length-normalized; ties broken toward lower token ids. memory is [T, D]
// for a single sample.
BeamHypothesis beam_search(const TransformerDecoder& decoder, ParamStore& store,
                           const Tensor& memory, const Vocab& vocab, int width, int max_len);

}  // namespace lipmark
