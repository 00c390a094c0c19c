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

#include "corpus.hpp"
#include "nn.hpp"

namespace lipmark {

struct FrontendDims {
  int landmarks = kNumLandmarks;
  int patch_size = 24;            // resize target and inference window
  std::vector<int64_t> fps_set;   // training-time window sizes
  bool fps_enabled = true;
  int64_t c1 = 2, c2 = 4, c3 = 8;  // tubelet encoder channels; c3 = tubelet dim
  int tubelet_depth = 5;           // temporal kernel extent (1 = 2D-patch variant)
  int64_t relpos_hidden = 16;
  int fusion_layers = 3;
  int fusion_heads = 2;
  int64_t motion_dim = 8;
  int64_t model_dim = 32;
  bool use_relpos = true;
  bool use_motion = true;
  bool mouth_crop = false;

  // effective token count per frame (1 in mouth-crop mode)
  int tokens() const { return mouth_crop ? 1 : landmarks; }
  int64_t relpos_in_dim() const { return 2 * (landmarks - 1); }
  // motion geometry width: 2K normalized coordinates plus the four lip
  // width/height distances when the full landmark set is present
  int64_t motion_geom_dim() const { return 2 * landmarks + (landmarks == 20 ? 4 : 0); }
};

// Axis-aligned w x w crops centered at rounded landmark coordinates,
// zero-padded at frame borders, bilinearly resized (corner-aligned) to the
// patch target when w differs from it. Output [K_eff, T, P, P].
Tensor extract_patches(const Tensor& clip, const LandmarkTrack& track, int window,
                       const FrontendDims& dims);

// Flattened ordered coordinate differences (p_i - p_j, j != i ascending),
// normalized by frame width. Output [T, K, 2(K-1)].
Tensor relpos_features(const LandmarkTrack& track, int64_t frame_width);

// Per-frame geometry (normalized coords + lip distances) differenced over
// time with a zero first row. Output [geom_dim, T] (conv1d channel layout).
Tensor motion_deltas(const LandmarkTrack& track, int64_t frame_width);

class Frontend {
 public:
  void init(ParamStore& store, Rng rng, const FrontendDims& dims);

  struct Output {
    Var h0;                          // [B, T, model_dim]
    std::vector<Tensor> fusion_attn;  // per layer [B*T, heads, K, K] (when requested)
  };

  // Batched forward over pre-extracted constant inputs:
  //   patches [B*K_eff, 1, T, P, P], relpos [B, T, K, 2(K-1)],
  //   motion [B, geom_dim, T].
  Output forward(const FwdCtx& ctx, const Tensor& patches, const Tensor& relpos,
                 const Tensor& motion, int64_t batch, int64_t frames,
                 bool keep_attention = false) const;

  const FrontendDims& dims() const { return dims_; }

 private:
  FrontendDims dims_;
  // tubelet encoder
  int conv1_w = -1, conv1_b = -1;
  BatchNormLayer bn1;
  int conv2_w = -1, conv2_b = -1;
  BatchNormLayer bn2;
  int conv3_w = -1, conv3_b = -1;
  BatchNormLayer bn3;
  // relative-position encoder
  Mlp relpos_mlp;
  // attentive intra-frame fusion
  struct FusionBlock {
    LayerNormLayer ln1, ln2;
    MultiHeadAttention attn;
    Mlp mlp;
  };
  std::vector<FusionBlock> fusion_;
  // inter-frame motion
  int motion_w = -1, motion_b = -1;
  // output projection to the back-end width
  Linear proj_;
};

}  // namespace lipmark
