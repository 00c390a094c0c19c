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

#include "decoder.hpp"

#include <algorithm>
#include <cmath>

namespace lipmark {

void TransformerDecoder::init(ParamStore& store, Rng rng, const DecoderDims& dims) {
  LIPMARK_CHECK(dims.model_dim % dims.heads == 0, ErrorCode::kInvalidArgument,
                "decoder dim not divisible by heads");
  dims_ = dims;
  embed_ = store.add("decoder.embed",
                     uniform_init(Shape{dims.vocab, dims.model_dim}, dims.model_dim,
                                  rng.child("embed")));
  blocks_.resize(static_cast<size_t>(dims.layers));
  for (int l = 0; l < dims.layers; ++l) {
    Block& blk = blocks_[static_cast<size_t>(l)];
    std::string base = "decoder" + std::to_string(l);
    Rng r = rng.child("block", static_cast<uint64_t>(l));
    blk.self_attn.init(store, r.child("self"), base + ".self", dims.model_dim, dims.heads);
    blk.ln1.init(store, base + ".ln1", dims.model_dim);
    blk.cross_attn.init(store, r.child("cross"), base + ".cross", dims.model_dim, dims.heads);
    blk.ln2.init(store, base + ".ln2", dims.model_dim);
    blk.ff_a.init(store, r.child("ffa"), base + ".ff_a", dims.model_dim, dims.ff_dim);
    blk.ff_b.init(store, r.child("ffb"), base + ".ff_b", dims.ff_dim, dims.model_dim);
    blk.ln3.init(store, base + ".ln3", dims.model_dim);
  }
  out_.init(store, rng.child("out"), "decoder.out", dims.model_dim, dims.vocab);
}

Var TransformerDecoder::forward(const FwdCtx& ctx, const std::vector<std::vector<int>>& prefixes,
                                Var memory) const {
  Tape& t = ctx.tape;
  LIPMARK_CHECK(!prefixes.empty(), ErrorCode::kInvalidArgument, "empty prefix batch");
  int64_t batch = static_cast<int64_t>(prefixes.size());
  int64_t n = static_cast<int64_t>(prefixes[0].size());
  for (const auto& p : prefixes) {
    LIPMARK_CHECK(static_cast<int64_t>(p.size()) == n, ErrorCode::kDimension,
                  "ragged prefix batch (pad first)");
  }
  LIPMARK_CHECK(t.val(memory).ndim() == 3 && t.val(memory).dim(0) == batch, ErrorCode::kDimension,
                "decoder memory batch mismatch");

  std::vector<int64_t> flat;
  flat.reserve(static_cast<size_t>(batch * n));
  for (const auto& p : prefixes) {
    for (int tok : p) flat.push_back(tok);
  }
  Var x = t.gather_rows(ctx.p(embed_), std::move(flat));
  x = t.reshape(x, Shape{batch, n, dims_.model_dim});
  x = t.add(x, t.constant(sinusoidal_encoding(n, dims_.model_dim)));

  Var mask = t.constant(causal_mask(n));
  for (const Block& blk : blocks_) {
    Var sa = blk.self_attn.forward(ctx, x, x, mask, nullptr);
    x = blk.ln1.forward(ctx, t.add(x, sa));
    Var ca = blk.cross_attn.forward(ctx, x, memory, kNoVar, nullptr);
    x = blk.ln2.forward(ctx, t.add(x, ca));
    Var ff = blk.ff_b.forward(ctx, t.relu(blk.ff_a.forward(ctx, x)));
    x = blk.ln3.forward(ctx, t.add(x, ff));
  }
  return out_.forward(ctx, x);  // [B, N, V]
}

BeamHypothesis beam_search(const TransformerDecoder& decoder, ParamStore& store,
                           const Tensor& memory, const Vocab& vocab, int width, int max_len) {
  LIPMARK_CHECK(width >= 1, ErrorCode::kInvalidArgument, "beam width must be >= 1");
  LIPMARK_CHECK(memory.ndim() == 2, ErrorCode::kDimension, "beam memory must be [T,D]");

  struct Live {
    std::vector<int> tokens;  // after sos
    double log_prob = 0.0;
  };
  std::vector<Live> live{Live{}};
  std::vector<BeamHypothesis> finished;
  int64_t frames = memory.dim(0), dim = memory.dim(1);

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    // score all live prefixes in one batched forward
    Tape tape(false);
    FwdCtx ctx{tape, store, /*training=*/false, /*frozen=*/true};
    int64_t nb = static_cast<int64_t>(live.size());
    std::vector<std::vector<int>> prefixes(static_cast<size_t>(nb));
    for (int64_t i = 0; i < nb; ++i) {
      prefixes[static_cast<size_t>(i)].push_back(vocab.sos());
      for (int tok : live[static_cast<size_t>(i)].tokens) {
        prefixes[static_cast<size_t>(i)].push_back(tok);
      }
    }
    // replicate the memory across live beams
    Tensor mem = Tensor::uninit(Shape{nb, frames, dim});
    for (int64_t i = 0; i < nb; ++i) {
      std::copy(memory.data(), memory.data() + frames * dim, mem.data() + i * frames * dim);
    }
    Var logits = decoder.forward(ctx, prefixes, tape.constant(std::move(mem)));
    Var logp = tape.log_softmax_last(logits);
    const Tensor& lp = tape.val(logp);
    int64_t n = static_cast<int64_t>(prefixes[0].size());
    int vsize = decoder.dims().vocab;

    struct Cand {
      int parent;
      int token;
      double log_prob;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<size_t>(nb) * static_cast<size_t>(vsize));
    for (int64_t i = 0; i < nb; ++i) {
      const double* row = lp.data() + (i * n + (n - 1)) * vsize;
      for (int v = 0; v < vsize; ++v) {
        if (v == Vocab::kBlank || v == vocab.sos()) continue;  // never emitted
        cands.push_back({static_cast<int>(i), v, live[static_cast<size_t>(i)].log_prob + row[v]});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });

    std::vector<Live> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= width) break;
      if (c.token == vocab.eos()) {
        BeamHypothesis hyp;
        hyp.tokens = live[static_cast<size_t>(c.parent)].tokens;
        hyp.log_prob = c.log_prob;
        int64_t len = static_cast<int64_t>(hyp.tokens.size()) + 1;  // count eos
        hyp.score = c.log_prob / static_cast<double>(len);
        finished.push_back(std::move(hyp));
        continue;
      }
      Live nx = live[static_cast<size_t>(c.parent)];
      nx.tokens.push_back(c.token);
      nx.log_prob = c.log_prob;
      next.push_back(std::move(nx));
    }
    live = std::move(next);
  }
  // hypotheses still live at max_len compete with their current score
  for (const Live& l : live) {
    BeamHypothesis hyp;
    hyp.tokens = l.tokens;
    hyp.log_prob = l.log_prob;
    hyp.score = l.log_prob / static_cast<double>(std::max<size_t>(1, l.tokens.size()));
    finished.push_back(std::move(hyp));
  }
  LIPMARK_CHECK(!finished.empty(), ErrorCode::kInternal, "beam search produced no hypothesis");
  size_t best = 0;
  for (size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score > finished[best].score) best = i;
  }
  return finished[best];
}

}  // namespace lipmark
