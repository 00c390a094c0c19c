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

struct ConformerDims {
  int blocks = 3;
  int64_t model_dim = 32;
  int64_t ff_dim = 128;
  int heads = 4;
  int depthwise_kernel = 31;
};

// Conformer encoder: macaron half-step feed-forwards, self-attention, and a
// gated depthwise-convolution module per block.
class Conformer {
 public:
  void init(ParamStore& store, Rng rng, const ConformerDims& dims);

  // x [B, T, D] -> [B, T, D]; zero blocks act as identity.
  Var forward(const FwdCtx& ctx, Var x) const;

  const ConformerDims& dims() const { return dims_; }

 private:
  struct Block {
    LayerNormLayer ff1_ln, attn_ln, ff2_ln, final_ln;
    Linear ff1_a, ff1_b, ff2_a, ff2_b;
    MultiHeadAttention attn;
    Linear conv_in;   // pointwise D -> 2D (GLU halves back)
    int conv_dw = -1;  // depthwise kernel [D, k]
    BatchNormLayer conv_bn;
    Linear conv_out;  // pointwise D -> D
  };

  Var block_forward(const FwdCtx& ctx, const Block& blk, Var x) const;

  ConformerDims dims_;
  std::vector<Block> blocks_;
};

}  // namespace lipmark
