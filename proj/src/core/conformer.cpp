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

#include "conformer.hpp"

namespace lipmark {

void Conformer::init(ParamStore& store, Rng rng, const ConformerDims& dims) {
  LIPMARK_CHECK(dims.model_dim % dims.heads == 0, ErrorCode::kInvalidArgument,
                "conformer dim not divisible by heads");
  LIPMARK_CHECK(dims.depthwise_kernel % 2 == 1, ErrorCode::kInvalidArgument,
                "depthwise kernel must be odd");
  dims_ = dims;
  blocks_.resize(static_cast<size_t>(dims.blocks));
  for (int l = 0; l < dims.blocks; ++l) {
    Block& blk = blocks_[static_cast<size_t>(l)];
    std::string base = "conformer" + std::to_string(l);
    Rng r = rng.child("block", static_cast<uint64_t>(l));
    blk.ff1_ln.init(store, base + ".ff1_ln", dims.model_dim);
    blk.ff1_a.init(store, r.child("ff1a"), base + ".ff1_a", dims.model_dim, dims.ff_dim);
    blk.ff1_b.init(store, r.child("ff1b"), base + ".ff1_b", dims.ff_dim, dims.model_dim);
    blk.attn_ln.init(store, base + ".attn_ln", dims.model_dim);
    blk.attn.init(store, r.child("attn"), base + ".attn", dims.model_dim, dims.heads);
    blk.conv_in.init(store, r.child("conv_in"), base + ".conv_in", dims.model_dim,
                     2 * dims.model_dim);
    blk.conv_dw = store.add(base + ".conv_dw.w",
                            uniform_init(Shape{dims.model_dim, dims.depthwise_kernel},
                                         dims.depthwise_kernel, r.child("conv_dw")));
    blk.conv_bn.init(store, base + ".conv_bn", dims.model_dim);
    blk.conv_out.init(store, r.child("conv_out"), base + ".conv_out", dims.model_dim,
                      dims.model_dim);
    blk.ff2_ln.init(store, base + ".ff2_ln", dims.model_dim);
    blk.ff2_a.init(store, r.child("ff2a"), base + ".ff2_a", dims.model_dim, dims.ff_dim);
    blk.ff2_b.init(store, r.child("ff2b"), base + ".ff2_b", dims.ff_dim, dims.model_dim);
    blk.final_ln.init(store, base + ".final_ln", dims.model_dim);
  }
}

Var Conformer::block_forward(const FwdCtx& ctx, const Block& blk, Var x) const {
  Tape& t = ctx.tape;
  // half-step feed-forward
  Var ff = blk.ff1_b.forward(ctx, t.swish(blk.ff1_a.forward(ctx, blk.ff1_ln.forward(ctx, x))));
  x = t.add(x, t.scale(ff, 0.5));
  // self-attention (bidirectional, no mask)
  Var an = blk.attn_ln.forward(ctx, x);
  x = t.add(x, blk.attn.forward(ctx, an, an, kNoVar, nullptr));
  // convolution module: pointwise -> GLU -> depthwise -> BN -> swish -> pointwise
  Var c = blk.conv_in.forward(ctx, x);       // [B, T, 2D]
  c = t.glu_last(c);                         // [B, T, D]
  c = t.permute(c, {0, 2, 1});               // [B, D, T]
  int pad = (dims_.depthwise_kernel - 1) / 2;
  c = t.depthwise_conv1d(c, ctx.p(blk.conv_dw), kNoVar, pad);
  c = blk.conv_bn.forward(ctx, c, 1);
  c = t.swish(c);
  c = t.permute(c, {0, 2, 1});               // [B, T, D]
  c = blk.conv_out.forward(ctx, c);
  x = t.add(x, c);
  // second half-step feed-forward and closing norm
  Var ff2 = blk.ff2_b.forward(ctx, t.swish(blk.ff2_a.forward(ctx, blk.ff2_ln.forward(ctx, x))));
  x = t.add(x, t.scale(ff2, 0.5));
  return blk.final_ln.forward(ctx, x);
}

Var Conformer::forward(const FwdCtx& ctx, Var x) const {
  LIPMARK_CHECK(ctx.tape.val(x).ndim() == 3 && ctx.tape.val(x).dim(2) == dims_.model_dim,
                ErrorCode::kDimension, "conformer input width mismatch");
  for (const Block& blk : blocks_) x = block_forward(ctx, blk, x);
  return x;
}

}  // namespace lipmark
