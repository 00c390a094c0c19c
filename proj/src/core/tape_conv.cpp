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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "gemm.hpp"
#include "parallel.hpp"
#include "tape.hpp"

namespace lipmark {
namespace {

struct ConvDims {
  int64_t N, Cin, Cout;
  int64_t in[3];   // D,H,W
  int64_t k[3];    // kernel extents
  int64_t s[3];    // strides
  int64_t p[3];    // zero padding
  int64_t out[3];  // output extents
  int64_t K;       // Cin * prod(k)
  int64_t P;       // prod(out)
  int64_t rows_per_chunk;
  int64_t nchunks;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, std::array<int, 3> stride,
                   std::array<int, 3> pad) {
  LIPMARK_CHECK(xs.size() == 5 && ws.size() == 5, ErrorCode::kDimension,
                "conv expects x[N,C,D,H,W], w[Cout,Cin,kd,kh,kw]");
  ConvDims d;
  d.N = xs[0];
  d.Cin = xs[1];
  d.Cout = ws[0];
  LIPMARK_CHECK(ws[1] == d.Cin, ErrorCode::kDimension, "conv channel mismatch");
  d.K = d.Cin;
  d.P = 1;
  for (int i = 0; i < 3; ++i) {
    d.in[i] = xs[static_cast<size_t>(2 + i)];
    d.k[i] = ws[static_cast<size_t>(2 + i)];
    d.s[i] = stride[static_cast<size_t>(i)];
    d.p[i] = pad[static_cast<size_t>(i)];
    LIPMARK_CHECK(d.s[i] >= 1 && d.p[i] >= 0, ErrorCode::kInvalidArgument, "bad conv stride/pad");
    int64_t o = (d.in[i] + 2 * d.p[i] - d.k[i]) / d.s[i] + 1;
    LIPMARK_CHECK(d.in[i] + 2 * d.p[i] >= d.k[i] && o > 0, ErrorCode::kDimension,
                  "conv output extent non-positive");
    d.out[i] = o;
    d.K *= d.k[i];
    d.P *= o;
  }
  // Aim for roughly 4096 columns per chunk GEMM; fixed per shape, so chunk
  // boundaries do not depend on the thread count.
  d.rows_per_chunk = std::clamp<int64_t>(4096 / d.P, 1, d.N);
  d.nchunks = (d.N + d.rows_per_chunk - 1) / d.rows_per_chunk;
  return d;
}

// Valid output range [lo, hi) on one axis for kernel offset `off` (= k - p):
// indices with 0 <= o*s + off < extent.
inline void valid_range(int64_t off, int64_t stride, int64_t in_extent, int64_t out_extent,
                        int64_t* lo, int64_t* hi) {
  int64_t l = off < 0 ? (-off + stride - 1) / stride : 0;
  int64_t h = in_extent - 1 - off;
  h = h < 0 ? 0 : h / stride + 1;
  *lo = std::min(l, out_extent);
  *hi = std::max(*lo, std::min(h, out_extent));
}

// Fills col[K x (rows*P)] for batch rows [b0, b1).
void im2col(const ConvDims& d, const double* x, int64_t b0, int64_t b1, double* col) {
  int64_t cols = (b1 - b0) * d.P;
  int64_t in_hw = d.in[1] * d.in[2];
  int64_t in_chw = d.in[0] * in_hw;
  int64_t out_hw = d.out[1] * d.out[2];
  for (int64_t ci = 0; ci < d.Cin; ++ci) {
    for (int64_t kz = 0; kz < d.k[0]; ++kz) {
      for (int64_t ky = 0; ky < d.k[1]; ++ky) {
        int64_t oy_lo, oy_hi;
        valid_range(ky - d.p[1], d.s[1], d.in[1], d.out[1], &oy_lo, &oy_hi);
        for (int64_t kx = 0; kx < d.k[2]; ++kx) {
          int64_t ox_lo, ox_hi;
          valid_range(kx - d.p[2], d.s[2], d.in[2], d.out[2], &ox_lo, &ox_hi);
          int64_t krow = ((ci * d.k[0] + kz) * d.k[1] + ky) * d.k[2] + kx;
          double* dstk = col + krow * cols;
          int64_t xoff = kx - d.p[2];
          for (int64_t b = b0; b < b1; ++b) {
            const double* xb = x + (b * d.Cin + ci) * in_chw;
            double* dstb = dstk + (b - b0) * d.P;
            for (int64_t oz = 0; oz < d.out[0]; ++oz) {
              int64_t iz = oz * d.s[0] - d.p[0] + kz;
              double* dstz = dstb + oz * out_hw;
              if (iz < 0 || iz >= d.in[0]) {
                std::fill(dstz, dstz + out_hw, 0.0);
                continue;
              }
              const double* xz = xb + iz * in_hw;
              for (int64_t oy = 0; oy < d.out[1]; ++oy) {
                double* dl = dstz + oy * d.out[2];
                if (oy < oy_lo || oy >= oy_hi) {
                  std::fill(dl, dl + d.out[2], 0.0);
                  continue;
                }
                const double* src = xz + (oy * d.s[1] - d.p[1] + ky) * d.in[2] + xoff;
                std::fill(dl, dl + ox_lo, 0.0);
                if (d.s[2] == 1) {
                  std::copy(src + ox_lo, src + ox_hi, dl + ox_lo);
                } else {
                  for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dl[ox] = src[ox * d.s[2]];
                }
                std::fill(dl + ox_hi, dl + d.out[2], 0.0);
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-adds dcol[K x (rows*P)] back into dx rows [b0, b1).
void col2im_add(const ConvDims& d, const double* dcol, int64_t b0, int64_t b1, double* dx) {
  int64_t cols = (b1 - b0) * d.P;
  int64_t in_hw = d.in[1] * d.in[2];
  int64_t in_chw = d.in[0] * in_hw;
  int64_t out_hw = d.out[1] * d.out[2];
  for (int64_t ci = 0; ci < d.Cin; ++ci) {
    for (int64_t kz = 0; kz < d.k[0]; ++kz) {
      for (int64_t ky = 0; ky < d.k[1]; ++ky) {
        int64_t oy_lo, oy_hi;
        valid_range(ky - d.p[1], d.s[1], d.in[1], d.out[1], &oy_lo, &oy_hi);
        for (int64_t kx = 0; kx < d.k[2]; ++kx) {
          int64_t ox_lo, ox_hi;
          valid_range(kx - d.p[2], d.s[2], d.in[2], d.out[2], &ox_lo, &ox_hi);
          int64_t krow = ((ci * d.k[0] + kz) * d.k[1] + ky) * d.k[2] + kx;
          const double* srck = dcol + krow * cols;
          int64_t xoff = kx - d.p[2];
          for (int64_t b = b0; b < b1; ++b) {
            double* xb = dx + (b * d.Cin + ci) * in_chw;
            const double* srcb = srck + (b - b0) * d.P;
            for (int64_t oz = 0; oz < d.out[0]; ++oz) {
              int64_t iz = oz * d.s[0] - d.p[0] + kz;
              if (iz < 0 || iz >= d.in[0]) continue;
              double* xz = xb + iz * in_hw;
              const double* srcz = srcb + oz * out_hw;
              for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                const double* sl = srcz + oy * d.out[2];
                double* dstl = xz + (oy * d.s[1] - d.p[1] + ky) * d.in[2] + xoff;
                if (d.s[2] == 1) {
                  for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dstl[ox] += sl[ox];
                } else {
                  for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dstl[ox * d.s[2]] += sl[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Gathers out-layout [b][co][p] rows into a [Cout x (rows*P)] matrix.
void gather_out(const ConvDims& d, const double* out, int64_t b0, int64_t b1, double* buf) {
  int64_t rows = b1 - b0;
  for (int64_t co = 0; co < d.Cout; ++co) {
    for (int64_t bi = 0; bi < rows; ++bi) {
      const double* src = out + ((b0 + bi) * d.Cout + co) * d.P;
      std::copy(src, src + d.P, buf + (co * rows + bi) * d.P);
    }
  }
}

void scatter_out(const ConvDims& d, const double* buf, int64_t b0, int64_t b1, double* out) {
  int64_t rows = b1 - b0;
  for (int64_t co = 0; co < d.Cout; ++co) {
    for (int64_t bi = 0; bi < rows; ++bi) {
      const double* src = buf + (co * rows + bi) * d.P;
      std::copy(src, src + d.P, out + ((b0 + bi) * d.Cout + co) * d.P);
    }
  }
}

}  // namespace

namespace {

// Fast path for temporal-stride-1 single-input-channel 3D convolution: build
// the 2D im2col of each frame once and accumulate the temporal taps as
// shifted GEMMs, instead of materializing every (kz, frame) pair.
bool temporal_fast_path(const ConvDims& d) {
  return d.Cin == 1 && d.s[0] == 1 && d.k[0] > 1 && d.out[0] == d.in[0];
}

// col2d buffer layout per sample: [k2 x (frames * p2)], frame-major columns.
void im2col_frames(const ConvDims& d, const double* xn, double* col) {
  int64_t k2 = d.k[1] * d.k[2];
  int64_t p2 = d.out[1] * d.out[2];
  int64_t cols = d.in[0] * p2;  // all frames
  int64_t in_hw = d.in[1] * d.in[2];
  for (int64_t ky = 0; ky < d.k[1]; ++ky) {
    int64_t oy_lo, oy_hi;
    valid_range(ky - d.p[1], d.s[1], d.in[1], d.out[1], &oy_lo, &oy_hi);
    for (int64_t kx = 0; kx < d.k[2]; ++kx) {
      int64_t ox_lo, ox_hi;
      valid_range(kx - d.p[2], d.s[2], d.in[2], d.out[2], &ox_lo, &ox_hi);
      double* dstk = col + (ky * d.k[2] + kx) * cols;
      int64_t xoff = kx - d.p[2];
      for (int64_t t = 0; t < d.in[0]; ++t) {
        const double* xz = xn + t * in_hw;
        double* dstt = dstk + t * p2;
        for (int64_t oy = 0; oy < d.out[1]; ++oy) {
          double* dl = dstt + oy * d.out[2];
          if (oy < oy_lo || oy >= oy_hi) {
            std::fill(dl, dl + d.out[2], 0.0);
            continue;
          }
          const double* src = xz + (oy * d.s[1] - d.p[1] + ky) * d.in[2] + xoff;
          std::fill(dl, dl + ox_lo, 0.0);
          if (d.s[2] == 1) {
            std::copy(src + ox_lo, src + ox_hi, dl + ox_lo);
          } else {
            for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dl[ox] = src[ox * d.s[2]];
          }
          std::fill(dl + ox_hi, dl + d.out[2], 0.0);
        }
      }
    }
  }
  (void)k2;
}

void col2im_frames_add(const ConvDims& d, const double* col, double* dxn) {
  int64_t p2 = d.out[1] * d.out[2];
  int64_t cols = d.in[0] * p2;
  int64_t in_hw = d.in[1] * d.in[2];
  for (int64_t ky = 0; ky < d.k[1]; ++ky) {
    int64_t oy_lo, oy_hi;
    valid_range(ky - d.p[1], d.s[1], d.in[1], d.out[1], &oy_lo, &oy_hi);
    for (int64_t kx = 0; kx < d.k[2]; ++kx) {
      int64_t ox_lo, ox_hi;
      valid_range(kx - d.p[2], d.s[2], d.in[2], d.out[2], &ox_lo, &ox_hi);
      const double* srck = col + (ky * d.k[2] + kx) * cols;
      int64_t xoff = kx - d.p[2];
      for (int64_t t = 0; t < d.in[0]; ++t) {
        double* xz = dxn + t * in_hw;
        const double* srct = srck + t * p2;
        for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
          const double* sl = srct + oy * d.out[2];
          double* dstl = xz + (oy * d.s[1] - d.p[1] + ky) * d.in[2] + xoff;
          if (d.s[2] == 1) {
            for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dstl[ox] += sl[ox];
          } else {
            for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dstl[ox * d.s[2]] += sl[ox];
          }
        }
      }
    }
  }
}

// Per-tap packed kernel [Cout x k2] for temporal tap kz.
void pack_tap(const ConvDims& d, const double* w, int64_t kz, double* packed) {
  int64_t k2 = d.k[1] * d.k[2];
  for (int64_t co = 0; co < d.Cout; ++co) {
    std::copy(w + (co * d.k[0] + kz) * k2, w + (co * d.k[0] + kz + 1) * k2, packed + co * k2);
  }
}

using StrideMapC = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>, 0, Eigen::OuterStride<>>;
using StrideMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>, 0, Eigen::OuterStride<>>;
using PlainMapC = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>;
using PlainMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>;

Var temporal_conv3d(Tape& tape, Var x, Var w, Var b, const ConvDims& d) {
  const Tensor& xv = tape.val(x);
  const Tensor& wv = tape.val(w);
  int64_t frames = d.in[0];
  int64_t k2 = d.k[1] * d.k[2];
  int64_t p2 = d.out[1] * d.out[2];
  int64_t cols = frames * p2;
  int64_t p0 = d.p[0], kd = d.k[0];
  Tensor out = Tensor::uninit(Shape{d.N, d.Cout, frames, d.out[1], d.out[2]});
  const double* px = xv.data();
  const double* pw = wv.data();
  const double* pb = b.valid() ? tape.val(b).data() : nullptr;
  double* po = out.data();
  parallel_for(d.N, [&](int64_t lo, int64_t hi) {
    std::vector<double> col(static_cast<size_t>(k2 * cols));
    std::vector<double> tap(static_cast<size_t>(d.Cout * k2));
    for (int64_t n = lo; n < hi; ++n) {
      im2col_frames(d, px + n * frames * d.in[1] * d.in[2], col.data());
      double* on = po + n * d.Cout * cols;
      if (pb != nullptr) {
        for (int64_t co = 0; co < d.Cout; ++co) {
          std::fill(on + co * cols, on + (co + 1) * cols, pb[co]);
        }
      } else {
        std::fill(on, on + d.Cout * cols, 0.0);
      }
      for (int64_t kz = 0; kz < kd; ++kz) {
        int64_t t_lo = std::max<int64_t>(0, p0 - kz);
        int64_t t_hi = std::min<int64_t>(frames, frames + p0 - kz);
        if (t_lo >= t_hi) continue;
        pack_tap(d, pw, kz, tap.data());
        int64_t span = (t_hi - t_lo) * p2;
        PlainMapC A(tap.data(), d.Cout, k2);
        StrideMapC B(col.data() + (t_lo + kz - p0) * p2, k2, span, Eigen::OuterStride<>(cols));
        StrideMap C(on + t_lo * p2, d.Cout, span, Eigen::OuterStride<>(cols));
        C.noalias() += A * B;
      }
    }
  });
  ConvDims dc = d;
  return tape.custom(
      std::move(out), {x, w, b}, [x, w, b, dc](Tape& t, const Tensor& g) {
        const ConvDims& d = dc;
        int64_t frames = d.in[0];
        int64_t k2 = d.k[1] * d.k[2];
        int64_t p2 = d.out[1] * d.out[2];
        int64_t cols = frames * p2;
        int64_t p0 = d.p[0], kd = d.k[0];
        const double* pw = t.val(w).data();
        const double* px = t.val(x).data();
        const double* pg = g.data();
        if (t.requires_grad(x)) {
          Tensor& dx = t.grad_buffer(x);
          double* pdx = dx.data();
          parallel_for(d.N, [&](int64_t lo, int64_t hi) {
            std::vector<double> dcol(static_cast<size_t>(k2 * cols));
            std::vector<double> tap(static_cast<size_t>(d.Cout * k2));
            for (int64_t n = lo; n < hi; ++n) {
              std::fill(dcol.begin(), dcol.end(), 0.0);
              const double* gn = pg + n * d.Cout * cols;
              for (int64_t kz = 0; kz < kd; ++kz) {
                int64_t t_lo = std::max<int64_t>(0, p0 - kz);
                int64_t t_hi = std::min<int64_t>(frames, frames + p0 - kz);
                if (t_lo >= t_hi) continue;
                pack_tap(d, pw, kz, tap.data());
                int64_t span = (t_hi - t_lo) * p2;
                PlainMapC A(tap.data(), d.Cout, k2);
                StrideMapC G(gn + t_lo * p2, d.Cout, span, Eigen::OuterStride<>(cols));
                StrideMap DC(dcol.data() + (t_lo + kz - p0) * p2, k2, span,
                             Eigen::OuterStride<>(cols));
                DC.noalias() += A.transpose() * G;
              }
              col2im_frames_add(d, dcol.data(), pdx + n * frames * d.in[1] * d.in[2]);
            }
          });
        }
        if (t.requires_grad(w)) {
          std::vector<Tensor> partials(static_cast<size_t>(d.N));
          parallel_for(d.N, [&](int64_t lo, int64_t hi) {
            std::vector<double> col(static_cast<size_t>(k2 * cols));
            for (int64_t n = lo; n < hi; ++n) {
              im2col_frames(d, px + n * frames * d.in[1] * d.in[2], col.data());
              Tensor part(Shape{d.Cout, kd, k2}, 0.0);
              const double* gn = pg + n * d.Cout * cols;
              for (int64_t kz = 0; kz < kd; ++kz) {
                int64_t t_lo = std::max<int64_t>(0, p0 - kz);
                int64_t t_hi = std::min<int64_t>(frames, frames + p0 - kz);
                if (t_lo >= t_hi) continue;
                int64_t span = (t_hi - t_lo) * p2;
                StrideMapC G(gn + t_lo * p2, d.Cout, span, Eigen::OuterStride<>(cols));
                StrideMapC B(col.data() + (t_lo + kz - p0) * p2, k2, span,
                             Eigen::OuterStride<>(cols));
                // rows of part are [kd, k2] per co: row stride kd*k2
                StrideMap DWs(part.data() + kz * k2, d.Cout, k2,
                              Eigen::OuterStride<>(kd * k2));
                DWs.noalias() += G * B.transpose();
              }
              partials[static_cast<size_t>(n)] = std::move(part);
            }
          });
          Tensor& dw = t.grad_buffer(w);
          double* pdw = dw.data();
          for (const Tensor& part : partials) {
            for (int64_t i = 0; i < part.numel(); ++i) pdw[i] += part[i];
          }
        }
        if (b.valid() && t.requires_grad(b)) {
          Tensor& db = t.grad_buffer(b);
          double* pdb = db.data();
          for (int64_t n = 0; n < d.N; ++n) {
            for (int64_t co = 0; co < d.Cout; ++co) {
              const double* src = pg + (n * d.Cout + co) * cols;
              double s = 0.0;
              for (int64_t i = 0; i < cols; ++i) s += src[i];
              pdb[co] += s;
            }
          }
        }
      });
}

}  // namespace

Var Tape::conv3d(Var x, Var w, Var b, std::array<int, 3> stride, std::array<int, 3> pad) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  ConvDims dd = conv_dims(xv.shape(), wv.shape(), stride, pad);
  if (temporal_fast_path(dd)) {
    return temporal_conv3d(*this, x, w, b, dd);
  }
  ConvDims d = dd;
  if (b.valid()) {
    LIPMARK_CHECK(val(b).numel() == d.Cout, ErrorCode::kDimension, "conv bias extent mismatch");
  }
  Tensor out = Tensor::uninit(Shape{d.N, d.Cout, d.out[0], d.out[1], d.out[2]});
  const double* px = xv.data();
  const double* pw = wv.data();
  const double* pb = b.valid() ? val(b).data() : nullptr;
  double* po = out.data();
  parallel_for(d.nchunks, [&](int64_t c0, int64_t c1) {
    std::vector<double> col;
    std::vector<double> obuf;
    for (int64_t c = c0; c < c1; ++c) {
      int64_t b0 = c * d.rows_per_chunk;
      int64_t b1 = std::min(d.N, b0 + d.rows_per_chunk);
      int64_t rows = b1 - b0;
      int64_t cols = rows * d.P;
      col.resize(static_cast<size_t>(d.K * cols));
      im2col(d, px, b0, b1, col.data());
      if (rows == 1) {
        // output slab for one batch row is already [Cout x P] contiguous
        gemm_nn(pw, col.data(), po + b0 * d.Cout * d.P, d.Cout, d.K, cols, false);
      } else {
        obuf.resize(static_cast<size_t>(d.Cout * cols));
        gemm_nn(pw, col.data(), obuf.data(), d.Cout, d.K, cols, false);
        scatter_out(d, obuf.data(), b0, b1, po);
      }
    }
  });
  if (pb != nullptr) {
    parallel_for(d.N, [&](int64_t lo, int64_t hi) {
      for (int64_t n = lo; n < hi; ++n) {
        for (int64_t co = 0; co < d.Cout; ++co) {
          double* dst = po + (n * d.Cout + co) * d.P;
          double bias = pb[co];
          for (int64_t p = 0; p < d.P; ++p) dst[p] += bias;
        }
      }
    });
  }
  return make_node(std::move(out), any_grad({x, w, b}), [x, w, b, d](Tape& t, const Tensor& g) {
    const Tensor& xv2 = t.val(x);
    const Tensor& wv2 = t.val(w);
    const double* px = xv2.data();
    const double* pw = wv2.data();
    const double* pg = g.data();
    if (t.requires_grad(x)) {
      Tensor& dx = t.grad_buffer(x);
      double* pdx = dx.data();
      parallel_for(d.nchunks, [&](int64_t c0, int64_t c1) {
        std::vector<double> dcol;
        std::vector<double> gbuf;
        for (int64_t c = c0; c < c1; ++c) {
          int64_t b0 = c * d.rows_per_chunk;
          int64_t b1 = std::min(d.N, b0 + d.rows_per_chunk);
          int64_t cols = (b1 - b0) * d.P;
          dcol.resize(static_cast<size_t>(d.K * cols));
          const double* gsrc;
          if (b1 - b0 == 1) {
            gsrc = pg + b0 * d.Cout * d.P;
          } else {
            gbuf.resize(static_cast<size_t>(d.Cout * cols));
            gather_out(d, pg, b0, b1, gbuf.data());
            gsrc = gbuf.data();
          }
          // dcol[K x cols] = w^T[K x Cout] * g[Cout x cols]
          gemm_tn(pw, gsrc, dcol.data(), d.K, d.Cout, cols, false);
          col2im_add(d, dcol.data(), b0, b1, pdx);
        }
      });
    }
    if (t.requires_grad(w)) {
      // per-chunk partials reduced in chunk order
      std::vector<Tensor> partials(static_cast<size_t>(d.nchunks));
      parallel_for(d.nchunks, [&](int64_t c0, int64_t c1) {
        std::vector<double> col;
        std::vector<double> gbuf;
        for (int64_t c = c0; c < c1; ++c) {
          int64_t b0 = c * d.rows_per_chunk;
          int64_t b1 = std::min(d.N, b0 + d.rows_per_chunk);
          int64_t cols = (b1 - b0) * d.P;
          col.resize(static_cast<size_t>(d.K * cols));
          im2col(d, px, b0, b1, col.data());
          const double* gsrc;
          if (b1 - b0 == 1) {
            gsrc = pg + b0 * d.Cout * d.P;
          } else {
            gbuf.resize(static_cast<size_t>(d.Cout * cols));
            gather_out(d, pg, b0, b1, gbuf.data());
            gsrc = gbuf.data();
          }
          Tensor part = Tensor::uninit(Shape{d.Cout, d.K});
          gemm_nt(gsrc, col.data(), part.data(), d.Cout, cols, d.K, false);
          partials[static_cast<size_t>(c)] = std::move(part);
        }
      });
      Tensor& dw = t.grad_buffer(w);
      double* pdw = dw.data();
      for (const Tensor& part : partials) {
        for (int64_t i = 0; i < part.numel(); ++i) pdw[i] += part[i];
      }
    }
    if (b.valid() && t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      double* pdb = db.data();
      for (int64_t n = 0; n < d.N; ++n) {
        for (int64_t co = 0; co < d.Cout; ++co) {
          const double* src = pg + (n * d.Cout + co) * d.P;
          double s = 0.0;
          for (int64_t p = 0; p < d.P; ++p) s += src[p];
          pdb[co] += s;
        }
      }
    }
  });
}

Var Tape::conv2d(Var x, Var w, Var b, std::array<int, 2> stride, std::array<int, 2> pad) {
  Shape xs = val(x).shape();
  Shape ws = val(w).shape();
  LIPMARK_CHECK(xs.size() == 4 && ws.size() == 4, ErrorCode::kDimension,
                "conv2d expects x[N,C,H,W], w[Cout,Cin,kh,kw]");
  Var x5 = reshape(x, Shape{xs[0], xs[1], 1, xs[2], xs[3]});
  Var w5 = reshape(w, Shape{ws[0], ws[1], 1, ws[2], ws[3]});
  Var y = conv3d(x5, w5, b, {1, stride[0], stride[1]}, {0, pad[0], pad[1]});
  Shape ys = val(y).shape();
  return reshape(y, Shape{ys[0], ys[1], ys[3], ys[4]});
}

Var Tape::conv1d(Var x, Var w, Var b, int stride, int pad) {
  Shape xs = val(x).shape();
  Shape ws = val(w).shape();
  LIPMARK_CHECK(xs.size() == 3 && ws.size() == 3, ErrorCode::kDimension,
                "conv1d expects x[N,C,T], w[Cout,Cin,k]");
  Var x5 = reshape(x, Shape{xs[0], xs[1], xs[2], 1, 1});
  Var w5 = reshape(w, Shape{ws[0], ws[1], ws[2], 1, 1});
  Var y = conv3d(x5, w5, b, {stride, 1, 1}, {pad, 0, 0});
  Shape ys = val(y).shape();
  return reshape(y, Shape{ys[0], ys[1], ys[2]});
}

Var Tape::depthwise_conv1d(Var x, Var w, Var b, int pad) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  LIPMARK_CHECK(xv.ndim() == 3 && wv.ndim() == 2, ErrorCode::kDimension,
                "depthwise_conv1d expects x[N,C,T], w[C,k]");
  int64_t N = xv.dim(0), C = xv.dim(1), T = xv.dim(2), k = wv.dim(1);
  LIPMARK_CHECK(wv.dim(0) == C, ErrorCode::kDimension, "depthwise channel mismatch");
  int64_t To = T + 2 * pad - k + 1;
  LIPMARK_CHECK(To > 0, ErrorCode::kDimension, "depthwise output extent non-positive");
  Tensor out = Tensor::uninit(Shape{N, C, To});
  const double* px = xv.data();
  const double* pw = wv.data();
  const double* pb = b.valid() ? val(b).data() : nullptr;
  double* po = out.data();
  parallel_for(N, [&](int64_t lo, int64_t hi) {
    for (int64_t n = lo; n < hi; ++n) {
      for (int64_t c = 0; c < C; ++c) {
        const double* xc = px + (n * C + c) * T;
        const double* wc = pw + c * k;
        double* oc = po + (n * C + c) * To;
        double bias = pb != nullptr ? pb[c] : 0.0;
        for (int64_t t = 0; t < To; ++t) {
          double s = bias;
          for (int64_t j = 0; j < k; ++j) {
            int64_t it = t - pad + j;
            if (it >= 0 && it < T) s += wc[j] * xc[it];
          }
          oc[t] = s;
        }
      }
    }
  });
  return make_node(std::move(out), any_grad({x, w, b}),
                   [x, w, b, N, C, T, k, To, pad](Tape& t, const Tensor& g) {
                     const Tensor& xv2 = t.val(x);
                     const Tensor& wv2 = t.val(w);
                     const double* px = xv2.data();
                     const double* pw = wv2.data();
                     const double* pg = g.data();
                     if (t.requires_grad(x)) {
                       Tensor& dx = t.grad_buffer(x);
                       double* pdx = dx.data();
                       parallel_for(N, [&](int64_t lo, int64_t hi) {
                         for (int64_t n = lo; n < hi; ++n) {
                           for (int64_t c = 0; c < C; ++c) {
                             const double* gc = pg + (n * C + c) * To;
                             const double* wc = pw + c * k;
                             double* dxc = pdx + (n * C + c) * T;
                             for (int64_t tt = 0; tt < To; ++tt) {
                               for (int64_t j = 0; j < k; ++j) {
                                 int64_t it = tt - pad + j;
                                 if (it >= 0 && it < T) dxc[it] += gc[tt] * wc[j];
                               }
                             }
                           }
                         }
                       });
                     }
                     if (t.requires_grad(w)) {
                       Tensor& dw = t.grad_buffer(w);
                       double* pdw = dw.data();
                       for (int64_t n = 0; n < N; ++n) {
                         for (int64_t c = 0; c < C; ++c) {
                           const double* gc = pg + (n * C + c) * To;
                           const double* xc = px + (n * C + c) * T;
                           double* dwc = pdw + c * k;
                           for (int64_t tt = 0; tt < To; ++tt) {
                             for (int64_t j = 0; j < k; ++j) {
                               int64_t it = tt - pad + j;
                               if (it >= 0 && it < T) dwc[j] += gc[tt] * xc[it];
                             }
                           }
                         }
                       }
                     }
                     if (b.valid() && t.requires_grad(b)) {
                       Tensor& db = t.grad_buffer(b);
                       double* pdb = db.data();
                       for (int64_t n = 0; n < N; ++n) {
                         for (int64_t c = 0; c < C; ++c) {
                           const double* gc = pg + (n * C + c) * To;
                           double s = 0.0;
                           for (int64_t tt = 0; tt < To; ++tt) s += gc[tt];
                           pdb[c] += s;
                         }
                       }
                     }
                   });
}

Var Tape::maxpool3d(Var x, std::array<int, 3> k, std::array<int, 3> s, std::array<int, 3> pad) {
  const Tensor& xv = val(x);
  LIPMARK_CHECK(xv.ndim() == 5, ErrorCode::kDimension, "maxpool3d expects [N,C,D,H,W]");
  int64_t N = xv.dim(0), C = xv.dim(1);
  int64_t in[3] = {xv.dim(2), xv.dim(3), xv.dim(4)};
  int64_t out[3];
  for (int i = 0; i < 3; ++i) {
    out[i] = (in[i] + 2 * pad[static_cast<size_t>(i)] - k[static_cast<size_t>(i)]) /
                 s[static_cast<size_t>(i)] +
             1;
    LIPMARK_CHECK(out[i] > 0, ErrorCode::kDimension, "maxpool output extent non-positive");
  }
  int64_t P = out[0] * out[1] * out[2];
  Tensor outv = Tensor::uninit(Shape{N, C, out[0], out[1], out[2]});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * C * P));
  const double* px = xv.data();
  double* po = outv.data();
  int64_t in_hw = in[1] * in[2];
  int64_t in_dhw = in[0] * in_hw;
  parallel_for(N * C, [&](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const double* xc = px + nc * in_dhw;
      double* oc = po + nc * P;
      int64_t* am = argmax->data() + nc * P;
      int64_t idx = 0;
      for (int64_t oz = 0; oz < out[0]; ++oz) {
        for (int64_t oy = 0; oy < out[1]; ++oy) {
          for (int64_t ox = 0; ox < out[2]; ++ox, ++idx) {
            double best = -std::numeric_limits<double>::infinity();
            int64_t besti = -1;
            for (int64_t kz = 0; kz < k[0]; ++kz) {
              int64_t iz = oz * s[0] - pad[0] + kz;
              if (iz < 0 || iz >= in[0]) continue;
              for (int64_t ky = 0; ky < k[1]; ++ky) {
                int64_t iy = oy * s[1] - pad[1] + ky;
                if (iy < 0 || iy >= in[1]) continue;
                for (int64_t kx = 0; kx < k[2]; ++kx) {
                  int64_t ix = ox * s[2] - pad[2] + kx;
                  if (ix < 0 || ix >= in[2]) continue;
                  int64_t ii = (iz * in[1] + iy) * in[2] + ix;
                  if (xc[ii] > best) {
                    best = xc[ii];
                    besti = ii;
                  }
                }
              }
            }
            LIPMARK_CHECK(besti >= 0, ErrorCode::kDimension, "maxpool window fully out of range");
            oc[idx] = best;
            am[idx] = besti;
          }
        }
      }
    }
  });
  return make_node(std::move(outv), any_grad({x}),
                   [x, argmax, N, C, P, in_dhw](Tape& t, const Tensor& g) {
                     Tensor& dx = t.grad_buffer(x);
                     double* pdx = dx.data();
                     const double* pg = g.data();
                     parallel_for(N * C, [&](int64_t lo, int64_t hi) {
                       for (int64_t nc = lo; nc < hi; ++nc) {
                         const int64_t* am = argmax->data() + nc * P;
                         const double* gc = pg + nc * P;
                         double* dxc = pdx + nc * in_dhw;
                         for (int64_t i = 0; i < P; ++i) dxc[am[i]] += gc[i];
                       }
                     });
                   });
}

}  // namespace lipmark
