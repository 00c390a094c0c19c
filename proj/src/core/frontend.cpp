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

#include "frontend.hpp"

#include <cmath>

namespace lipmark {

namespace {

// Crop one w x w window centered at the rounded landmark into dst (w*w).
void crop_window(const double* frame, int64_t height, int64_t width, double cx, double cy, int w,
                 double* dst) {
  int64_t sx = static_cast<int64_t>(std::llround(cx)) - w / 2;
  int64_t sy = static_cast<int64_t>(std::llround(cy)) - w / 2;
  for (int r = 0; r < w; ++r) {
    int64_t y = sy + r;
    double* row = dst + static_cast<int64_t>(r) * w;
    if (y < 0 || y >= height) {
      std::fill(row, row + w, 0.0);
      continue;
    }
    for (int c = 0; c < w; ++c) {
      int64_t x = sx + c;
      row[c] = (x >= 0 && x < width) ? frame[y * width + x] : 0.0;
    }
  }
}

// Corner-aligned bilinear resize from src (n x n) to dst (m x m).
void bilinear_resize(const double* src, int n, double* dst, int m) {
  double scale = m > 1 ? static_cast<double>(n - 1) / static_cast<double>(m - 1) : 0.0;
  for (int r = 0; r < m; ++r) {
    double fy = r * scale;
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, n - 1);
    double ay = fy - y0;
    for (int c = 0; c < m; ++c) {
      double fx = c * scale;
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, n - 1);
      double ax = fx - x0;
      double top = src[y0 * n + x0] * (1.0 - ax) + src[y0 * n + x1] * ax;
      double bot = src[y1 * n + x0] * (1.0 - ax) + src[y1 * n + x1] * ax;
      dst[r * m + c] = top * (1.0 - ay) + bot * ay;
    }
  }
}

}  // namespace

Tensor extract_patches(const Tensor& clip, const LandmarkTrack& track, int window,
                       const FrontendDims& dims) {
  LIPMARK_CHECK(clip.ndim() == 3, ErrorCode::kDimension, "clip must be [T,H,W]");
  int64_t frames = clip.dim(0), height = clip.dim(1), width = clip.dim(2);
  LIPMARK_CHECK(track.frames == frames, ErrorCode::kDimension, "clip/track frame mismatch");
  LIPMARK_CHECK(window <= std::min(height, width), ErrorCode::kInvalidArgument,
                "patch window larger than frame");
  int target = dims.patch_size;
  int k_eff = dims.tokens();
  // mouth-crop mode uses one large window at the lip centroid
  int w_eff = dims.mouth_crop ? std::min<int>(3 * window, static_cast<int>(std::min(height, width)))
                              : window;
  Tensor out = Tensor::uninit(Shape{k_eff, frames, target, target});
  std::vector<double> scratch(static_cast<size_t>(w_eff) * w_eff);
  for (int64_t t = 0; t < frames; ++t) {
    const double* frame = clip.data() + t * height * width;
    for (int k = 0; k < k_eff; ++k) {
      double cx, cy;
      if (dims.mouth_crop) {
        double sx = 0.0, sy = 0.0;
        for (int64_t j = 0; j < track.landmarks; ++j) {
          sx += track.x(t, j);
          sy += track.y(t, j);
        }
        cx = sx / static_cast<double>(track.landmarks);
        cy = sy / static_cast<double>(track.landmarks);
      } else {
        cx = track.x(t, k);
        cy = track.y(t, k);
      }
      double* dst = out.data() + ((static_cast<int64_t>(k) * frames) + t) * target * target;
      if (w_eff == target) {
        crop_window(frame, height, width, cx, cy, target, dst);
      } else {
        crop_window(frame, height, width, cx, cy, w_eff, scratch.data());
        bilinear_resize(scratch.data(), w_eff, dst, target);
      }
    }
  }
  return out;
}

Tensor relpos_features(const LandmarkTrack& track, int64_t frame_width) {
  int64_t frames = track.frames, k = track.landmarks;
  int64_t d = 2 * (k - 1);
  Tensor out = Tensor::uninit(Shape{frames, k, d});
  double inv_w = 1.0 / static_cast<double>(frame_width);
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t i = 0; i < k; ++i) {
      double* dst = out.data() + (t * k + i) * d;
      int64_t col = 0;
      for (int64_t j = 0; j < k; ++j) {
        if (j == i) continue;
        dst[col++] = (track.x(t, i) - track.x(t, j)) * inv_w;
        dst[col++] = (track.y(t, i) - track.y(t, j)) * inv_w;
      }
    }
  }
  return out;
}

Tensor motion_deltas(const LandmarkTrack& track, int64_t frame_width) {
  int64_t frames = track.frames, k = track.landmarks;
  bool with_distances = (k == 20);
  int64_t d = 2 * k + (with_distances ? 4 : 0);
  double inv_w = 1.0 / static_cast<double>(frame_width);
  // raw per-frame geometry in pixel units; normalization happens after
  // differencing so that a constant translation cancels exactly
  std::vector<double> geom(static_cast<size_t>(frames * d));
  auto dist = [&](int64_t t, int a, int b) {
    double dx = static_cast<double>(track.x(t, a)) - track.x(t, b);
    double dy = static_cast<double>(track.y(t, a)) - track.y(t, b);
    return std::sqrt(dx * dx + dy * dy);
  };
  for (int64_t t = 0; t < frames; ++t) {
    double* g = geom.data() + t * d;
    for (int64_t j = 0; j < k; ++j) {
      g[2 * j] = track.x(t, j);
      g[2 * j + 1] = track.y(t, j);
    }
    if (with_distances) {
      // 68-point convention pairs: outer width 49-55, outer height 52-58,
      // inner width 61-65, inner height 63-67 (local indices)
      g[2 * k + 0] = dist(t, 0, 6);
      g[2 * k + 1] = dist(t, 3, 9);
      g[2 * k + 2] = dist(t, 12, 16);
      g[2 * k + 3] = dist(t, 14, 18);
    }
  }
  // adjacent-frame differences, first row zero; layout [d, T] for conv1d
  Tensor out(Shape{d, frames}, 0.0);
  for (int64_t t = 1; t < frames; ++t) {
    const double* gt = geom.data() + t * d;
    const double* gp = geom.data() + (t - 1) * d;
    for (int64_t j = 0; j < d; ++j) out[j * frames + t] = (gt[j] - gp[j]) * inv_w;
  }
  return out;
}

void Frontend::init(ParamStore& store, Rng rng, const FrontendDims& dims) {
  dims_ = dims;
  int64_t kd = dims.tubelet_depth;
  conv1_w = store.add("frontend.tubelet.conv1.w",
                      uniform_init(Shape{dims.c1, 1, kd, 3, 3}, kd * 9, rng.child("c1w")));
  conv1_b = store.add("frontend.tubelet.conv1.b",
                      uniform_init(Shape{dims.c1}, kd * 9, rng.child("c1b")));
  bn1.init(store, "frontend.tubelet.bn1", dims.c1);
  conv2_w = store.add("frontend.tubelet.conv2.w",
                      uniform_init(Shape{dims.c2, dims.c1, 3, 3}, dims.c1 * 9, rng.child("c2w")));
  conv2_b = store.add("frontend.tubelet.conv2.b",
                      uniform_init(Shape{dims.c2}, dims.c1 * 9, rng.child("c2b")));
  bn2.init(store, "frontend.tubelet.bn2", dims.c2);
  conv3_w = store.add("frontend.tubelet.conv3.w",
                      uniform_init(Shape{dims.c3, dims.c2, 3, 3}, dims.c2 * 9, rng.child("c3w")));
  conv3_b = store.add("frontend.tubelet.conv3.b",
                      uniform_init(Shape{dims.c3}, dims.c2 * 9, rng.child("c3b")));
  bn3.init(store, "frontend.tubelet.bn3", dims.c3);

  if (dims.use_relpos && !dims.mouth_crop) {
    relpos_mlp.init(store, rng.child("relpos"), "frontend.relpos", dims.relpos_in_dim(),
                    dims.relpos_hidden, dims.c3, Mlp::Act::kSwish);
  }

  fusion_.resize(static_cast<size_t>(dims.fusion_layers));
  for (int l = 0; l < dims.fusion_layers; ++l) {
    std::string base = "frontend.fusion" + std::to_string(l);
    FusionBlock& blk = fusion_[static_cast<size_t>(l)];
    blk.ln1.init(store, base + ".ln1", dims.c3);
    blk.attn.init(store, rng.child("fuse_attn", static_cast<uint64_t>(l)), base + ".attn", dims.c3,
                  dims.fusion_heads);
    blk.ln2.init(store, base + ".ln2", dims.c3);
    blk.mlp.init(store, rng.child("fuse_mlp", static_cast<uint64_t>(l)), base + ".mlp", dims.c3,
                 4 * dims.c3, dims.c3, Mlp::Act::kSwish);
  }

  if (dims.use_motion && !dims.mouth_crop) {
    int64_t gd = dims.motion_geom_dim();
    motion_w = store.add("frontend.motion.w",
                         uniform_init(Shape{dims.motion_dim, gd, 3}, gd * 3, rng.child("mw")));
    motion_b = store.add("frontend.motion.b",
                         uniform_init(Shape{dims.motion_dim}, gd * 3, rng.child("mb")));
  }

  proj_.init(store, rng.child("proj"), "frontend.proj", dims.c3 + dims.motion_dim, dims.model_dim);
}

Frontend::Output Frontend::forward(const FwdCtx& ctx, const Tensor& patches, const Tensor& relpos,
                                   const Tensor& motion, int64_t batch, int64_t frames,
                                   bool keep_attention) const {
  Tape& t = ctx.tape;
  const FrontendDims& d = dims_;
  int64_t k_eff = d.tokens();
  int64_t p = d.patch_size;
  Shape expected{batch * k_eff, 1, frames, p, p};
  LIPMARK_CHECK(patches.shape() == expected, ErrorCode::kDimension,
                "unexpected patch stack shape " + shape_str(patches.shape()));

  // tubelet encoder
  Var x = t.constant(patches);
  int pd = (d.tubelet_depth - 1) / 2;
  x = t.conv3d(x, ctx.p(conv1_w), ctx.p(conv1_b), {1, 2, 2}, {pd, 1, 1});
  x = bn1.forward(ctx, x, 1);
  x = t.swish(x);
  x = t.maxpool3d(x, {1, 3, 3}, {1, 2, 2}, {0, 1, 1});
  const Shape& s1 = t.val(x).shape();  // [B*K, c1, T, h, w]
  int64_t h1 = s1[3], w1 = s1[4];
  x = t.permute(x, {0, 2, 1, 3, 4});
  x = t.reshape(x, Shape{batch * k_eff * frames, d.c1, h1, w1});
  x = t.conv2d(x, ctx.p(conv2_w), ctx.p(conv2_b), {2, 2}, {1, 1});
  x = bn2.forward(ctx, x, 1);
  x = t.swish(x);
  x = t.conv2d(x, ctx.p(conv3_w), ctx.p(conv3_b), {2, 2}, {1, 1});
  x = bn3.forward(ctx, x, 1);
  x = t.swish(x);
  x = t.mean_trailing(x, 2);  // spatial average pool -> [B*K*T, c3]
  x = t.reshape(x, Shape{batch, k_eff, frames, d.c3});
  Var v = t.permute(x, {0, 2, 1, 3});  // [B, T, K, c3]

  // relative-position features
  Var u = v;
  if (d.use_relpos && !d.mouth_crop) {
    Var r = relpos_mlp.forward(ctx, t.constant(relpos.reshaped(
                                        Shape{batch, frames, k_eff, d.relpos_in_dim()})));
    u = t.add(v, r);
  }

  // attentive intra-frame fusion over the K tokens of each frame
  Var z = t.reshape(u, Shape{batch * frames, k_eff, d.c3});
  Output out;
  for (const FusionBlock& blk : fusion_) {
    Tensor attn;
    Var zn = blk.ln1.forward(ctx, z);
    Var y = t.add(blk.attn.forward(ctx, zn, zn, kNoVar, keep_attention ? &attn : nullptr), z);
    z = t.add(blk.mlp.forward(ctx, blk.ln2.forward(ctx, y)), y);
    if (keep_attention) out.fusion_attn.push_back(std::move(attn));
  }
  Var f = t.mean_axis(t.reshape(z, Shape{batch, frames, k_eff, d.c3}), 2);  // [B, T, c3]

  // inter-frame motion features
  Var m;
  if (d.use_motion && !d.mouth_crop) {
    Var md = t.constant(motion.reshaped(Shape{batch, d.motion_geom_dim(), frames}));
    Var mc = t.conv1d(md, ctx.p(motion_w), ctx.p(motion_b), 1, 1);
    m = t.permute(t.swish(mc), {0, 2, 1});  // [B, T, motion_dim]
  } else {
    m = t.constant(Tensor(Shape{batch, frames, d.motion_dim}, 0.0));
  }

  Var h = t.concat({f, m}, 2);
  out.h0 = proj_.forward(ctx, h);
  return out;
}

}  // namespace lipmark
