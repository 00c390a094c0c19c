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

#include "model.hpp"

#include <cmath>

#include "parallel.hpp"

namespace lipmark {

ModelConfig ModelConfig::from_config(const Config& cfg, int speakers) {
  ModelConfig mc;
  FrontendDims& fe = mc.frontend;
  fe.landmarks = static_cast<int>(cfg.get_int("model.landmarks"));
  fe.patch_size = static_cast<int>(cfg.get_int("model.patch_size"));
  fe.fps_set = cfg.get_int_list("model.fps_set");
  fe.fps_enabled = cfg.get_bool("model.fps_enabled");
  auto channels = cfg.get_int_list("model.tubelet_channels");
  LIPMARK_CHECK(channels.size() == 3, ErrorCode::kParse,
                "model.tubelet_channels needs exactly three entries");
  fe.c1 = channels[0];
  fe.c2 = channels[1];
  fe.c3 = channels[2];
  fe.tubelet_depth = static_cast<int>(cfg.get_int("model.tubelet_temporal_depth"));
  LIPMARK_CHECK(fe.tubelet_depth % 2 == 1, ErrorCode::kParse,
                "model.tubelet_temporal_depth must be odd");
  fe.relpos_hidden = cfg.get_int("model.relpos_hidden");
  fe.fusion_layers = static_cast<int>(cfg.get_int("model.fusion_layers"));
  fe.fusion_heads = static_cast<int>(cfg.get_int("model.fusion_heads"));
  fe.motion_dim = cfg.get_int("model.motion_dim");
  fe.model_dim = cfg.get_int("model.model_dim");
  fe.use_relpos = cfg.get_bool("model.use_relpos");
  fe.use_motion = cfg.get_bool("model.use_motion");
  fe.mouth_crop = cfg.get_bool("model.mouth_crop");
  LIPMARK_CHECK(fe.patch_size >= 8 && fe.patch_size % 2 == 0, ErrorCode::kParse,
                "model.patch_size must be even and >= 8");

  mc.conformer.blocks = static_cast<int>(cfg.get_int("model.conformer_blocks"));
  mc.conformer.model_dim = cfg.get_int("model.model_dim");
  mc.conformer.ff_dim = cfg.get_int("model.conformer_ff");
  mc.conformer.heads = static_cast<int>(cfg.get_int("model.conformer_heads"));
  mc.conformer.depthwise_kernel = static_cast<int>(cfg.get_int("model.conformer_kernel"));

  mc.decoder.layers = static_cast<int>(cfg.get_int("model.decoder_layers"));
  mc.decoder.model_dim = cfg.get_int("model.model_dim");
  mc.decoder.ff_dim = cfg.get_int("model.decoder_ff");
  mc.decoder.heads = static_cast<int>(cfg.get_int("model.decoder_heads"));

  mc.speaker_hidden = cfg.get_int("model.speaker_hidden");
  mc.speakers = speakers;
  mc.mi_hidden = cfg.get_int("train.mi_hidden");
  mc.lambda_ctc = cfg.get_double("train.lambda_ctc");
  LIPMARK_CHECK(mc.lambda_ctc >= 0.0 && mc.lambda_ctc <= 1.0, ErrorCode::kParse,
                "train.lambda_ctc must be in [0,1]");
  mc.init_seed = static_cast<uint64_t>(cfg.get_int("seed"));
  return mc;
}

void LipModel::init(const ModelConfig& cfg) {
  cfg_ = cfg;
  cfg_.decoder.vocab = vocab_.size();
  Rng rng = Rng(cfg.init_seed).child("init");
  frontend_.init(store_, rng.child("frontend"), cfg_.frontend);
  conformer_.init(store_, rng.child("conformer"), cfg_.conformer);
  int64_t d = cfg_.conformer.model_dim;
  ctc_head_w = store_.add("ctc_head.w",
                          uniform_init(Shape{static_cast<int64_t>(vocab_.size()), d}, d,
                                       rng.child("ctc_w")));
  ctc_head_b = store_.add("ctc_head.b",
                          uniform_init(Shape{static_cast<int64_t>(vocab_.size())}, d,
                                       rng.child("ctc_b")));
  decoder_.init(store_, rng.child("decoder"), cfg_.decoder);
  speaker_.init(store_, rng.child("speaker"), d, cfg_.speaker_hidden, cfg_.speakers);
  vclub_q_.init(store_, rng.child("mi_q"), "mi.q", cfg_.speaker_hidden, cfg_.mi_hidden, d);
  jsd_f_.init(store_, rng.child("mi_f"), "mi.f", d, d, cfg_.mi_hidden);
}

LipModel::Batch LipModel::prepare_batch(const std::vector<const Sample*>& samples,
                                        int window) const {
  LIPMARK_CHECK(!samples.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const FrontendDims& fe = cfg_.frontend;
  Batch batch;
  batch.size = static_cast<int64_t>(samples.size());
  batch.frames = samples[0]->track.frames;
  int64_t k_eff = fe.tokens();
  int64_t p = fe.patch_size;
  for (const Sample* s : samples) {
    LIPMARK_CHECK(s->track.frames == batch.frames, ErrorCode::kDimension,
                  "mixed clip lengths in one batch");
    LIPMARK_CHECK(s->track.landmarks == fe.landmarks, ErrorCode::kDimension,
                  "landmark count mismatch");
  }
  batch.patches = Tensor::uninit(Shape{batch.size * k_eff, 1, batch.frames, p, p});
  bool need_relpos = fe.use_relpos && !fe.mouth_crop;
  bool need_motion = fe.use_motion && !fe.mouth_crop;
  if (need_relpos) {
    batch.relpos =
        Tensor::uninit(Shape{batch.size, batch.frames, fe.landmarks, fe.relpos_in_dim()});
  }
  if (need_motion) {
    batch.motion = Tensor::uninit(Shape{batch.size, fe.motion_geom_dim(), batch.frames});
  }
  batch.targets.resize(samples.size());
  batch.speakers.resize(samples.size());
  batch.transcripts.resize(samples.size());

  int64_t patch_stride = k_eff * batch.frames * p * p;
  parallel_for(batch.size, [&](int64_t lo, int64_t hi) {
    for (int64_t b = lo; b < hi; ++b) {
      const Sample& s = *samples[static_cast<size_t>(b)];
      Tensor clip = s.clip.empty()
                        ? render_clip(s.track, s.profile, s.height, s.width, s.noise_seed)
                        : s.clip;
      Tensor patches = extract_patches(clip, s.track, window, fe);
      std::copy(patches.data(), patches.data() + patch_stride,
                batch.patches.data() + b * patch_stride);
      if (need_relpos) {
        Tensor rp = relpos_features(s.track, s.width);
        std::copy(rp.data(), rp.data() + rp.numel(), batch.relpos.data() + b * rp.numel());
      }
      if (need_motion) {
        Tensor md = motion_deltas(s.track, s.width);
        std::copy(md.data(), md.data() + md.numel(), batch.motion.data() + b * md.numel());
      }
    }
  });
  for (size_t i = 0; i < samples.size(); ++i) {
    batch.targets[i] = vocab_.encode(samples[i]->transcript);
    batch.speakers[i] = samples[i]->speaker_id;
    batch.transcripts[i] = samples[i]->transcript;
  }
  return batch;
}

LipModel::Encoded LipModel::encode(const FwdCtx& ctx, const Batch& batch,
                                   bool keep_attention) const {
  Encoded out;
  Frontend::Output fe = frontend_.forward(ctx, batch.patches, batch.relpos, batch.motion,
                                          batch.size, batch.frames, keep_attention);
  out.h0 = fe.h0;
  out.fusion_attn = std::move(fe.fusion_attn);
  // absolute sinusoidal positions enter at the conformer input
  Var pe = ctx.tape.constant(sinusoidal_encoding(batch.frames, cfg_.conformer.model_dim));
  out.hlb = conformer_.forward(ctx, ctx.tape.add(out.h0, pe));
  return out;
}

LipModel::VsrLoss LipModel::vsr_loss(const FwdCtx& ctx, const Encoded& enc,
                                     const Batch& batch) const {
  Tape& t = ctx.tape;
  int vsize = vocab_.size();
  // CTC branch: independent linear head over the encoder output
  Var flat = t.reshape(enc.hlb, Shape{batch.size * batch.frames, cfg_.conformer.model_dim});
  Var ctc_logits = t.add(t.matmul(flat, ctx.p(ctc_head_w), /*transpose_b=*/true),
                         ctx.p(ctc_head_b));
  ctc_logits = t.reshape(ctc_logits, Shape{batch.size, batch.frames, vsize});
  Var ctc_sum = kNoVar;
  for (int64_t b = 0; b < batch.size; ++b) {
    Var row = t.reshape(t.slice(ctc_logits, 0, b, 1), Shape{batch.frames, vsize});
    Var lb = ctc_loss_op(t, row, batch.targets[static_cast<size_t>(b)], Vocab::kBlank);
    ctc_sum = ctc_sum.valid() ? t.add(ctc_sum, lb) : lb;
  }
  VsrLoss out;
  out.ctc = t.scale(ctc_sum, 1.0 / static_cast<double>(batch.size));

  // attention branch: teacher forcing with sos prepended and eos appended
  size_t max_len = 0;
  for (const auto& y : batch.targets) max_len = std::max(max_len, y.size());
  int64_t n = static_cast<int64_t>(max_len) + 1;
  std::vector<std::vector<int>> prefixes(batch.targets.size());
  std::vector<int64_t> picks;
  picks.reserve(static_cast<size_t>(batch.size * n));
  Tensor weights(Shape{batch.size * n}, 0.0);
  for (size_t b = 0; b < batch.targets.size(); ++b) {
    const auto& y = batch.targets[b];
    auto& pref = prefixes[b];
    pref.push_back(vocab_.sos());
    for (int tok : y) pref.push_back(tok);
    while (static_cast<int64_t>(pref.size()) < n) pref.push_back(vocab_.eos());
    double w = 1.0 / (static_cast<double>(y.size() + 1) * static_cast<double>(batch.size));
    for (int64_t pos = 0; pos < n; ++pos) {
      int label = pos < static_cast<int64_t>(y.size()) ? y[static_cast<size_t>(pos)]
                                                       : vocab_.eos();
      picks.push_back((static_cast<int64_t>(b) * n + pos) * vsize + label);
      if (pos <= static_cast<int64_t>(y.size())) {
        weights[static_cast<int64_t>(b) * n + pos] = w;
      }
    }
  }
  Var logits = decoder_.forward(ctx, prefixes, enc.hlb);
  Var logp = t.log_softmax_last(logits);
  Var picked = t.gather_index(logp, std::move(picks));
  out.ce = t.neg(t.sum_all(t.mul(picked, t.constant(weights))));
  out.vsr = t.add(t.scale(out.ctc, cfg_.lambda_ctc), t.scale(out.ce, 1.0 - cfg_.lambda_ctc));
  return out;
}

Tensor LipModel::encode_sample(const Sample& sample) const {
  std::vector<const Sample*> one{&sample};
  Batch batch = prepare_batch(one, cfg_.frontend.patch_size);
  Tape tape(false);
  // const_cast is confined here: inference mode never mutates the store
  FwdCtx ctx{tape, const_cast<ParamStore&>(store_), /*training=*/false, /*frozen=*/true};
  Encoded enc = encode(ctx, batch, false);
  return tape.val(enc.hlb).reshaped(Shape{batch.frames, cfg_.conformer.model_dim});
}

BeamHypothesis LipModel::decode_sample(const Sample& sample, int beam_width, int max_len) const {
  Tensor memory = encode_sample(sample);
  return beam_search(decoder_, const_cast<ParamStore&>(store_), memory, vocab_, beam_width,
                     max_len);
}

std::vector<Tensor> LipModel::attention_maps(const Sample& sample) const {
  std::vector<const Sample*> one{&sample};
  Batch batch = prepare_batch(one, cfg_.frontend.patch_size);
  Tape tape(false);
  FwdCtx ctx{tape, const_cast<ParamStore&>(store_), false, true};
  Encoded enc = encode(ctx, batch, /*keep_attention=*/true);
  return std::move(enc.fusion_attn);  // per layer [T, heads, K, K] for B=1
}

std::map<std::string, Tensor> LipModel::export_params() const {
  std::map<std::string, Tensor> table;
  for (int pid = 0; pid < store_.size(); ++pid) {
    table.emplace(store_.name(pid), store_.value(pid));
  }
  return table;
}

void LipModel::import_params(const std::map<std::string, Tensor>& table) {
  for (int pid = 0; pid < store_.size(); ++pid) {
    auto it = table.find(store_.name(pid));
    LIPMARK_CHECK(it != table.end(), ErrorCode::kParse,
                  "checkpoint missing parameter: " + store_.name(pid));
    LIPMARK_CHECK(it->second.shape() == store_.value(pid).shape(), ErrorCode::kParse,
                  "checkpoint shape mismatch for " + store_.name(pid));
    store_.value_mut(pid) = it->second;
  }
  LIPMARK_CHECK(static_cast<int>(table.size()) == store_.size(), ErrorCode::kParse,
                "checkpoint has extra parameters");
}

}  // namespace lipmark
