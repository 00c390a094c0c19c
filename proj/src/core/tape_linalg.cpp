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

#include "gemm.hpp"
#include "parallel.hpp"
#include "tape.hpp"

namespace lipmark {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapCRow = Eigen::Map<const RowMat>;

}  // namespace

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  LIPMARK_CHECK(av.ndim() == 2 && bv.ndim() == 2, ErrorCode::kDimension, "matmul expects matrices");
  int64_t m = av.dim(0), k = av.dim(1);
  int64_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
  int64_t n = transpose_b ? bv.dim(0) : bv.dim(1);
  LIPMARK_CHECK(bk == k, ErrorCode::kDimension,
                "matmul inner extents differ: " + shape_str(av.shape()) + " vs " +
                    shape_str(bv.shape()));
  Tensor out = Tensor::uninit(Shape{m, n});
  if (transpose_b) {
    gemm_nt(av.data(), bv.data(), out.data(), m, k, n, false);
  } else {
    gemm_nn(av.data(), bv.data(), out.data(), m, k, n, false);
  }
  return make_node(std::move(out), any_grad({a, b}),
                   [a, b, m, k, n, transpose_b](Tape& t, const Tensor& g) {
                     const Tensor& av2 = t.val(a);
                     const Tensor& bv2 = t.val(b);
                     if (t.requires_grad(a)) {
                       Tensor& da = t.grad_buffer(a);
                       if (transpose_b) {
                         gemm_nn(g.data(), bv2.data(), da.data(), m, n, k, true);
                       } else {
                         gemm_nt(g.data(), bv2.data(), da.data(), m, n, k, true);
                       }
                     }
                     if (t.requires_grad(b)) {
                       Tensor& db = t.grad_buffer(b);
                       if (transpose_b) {
                         // db[n,k] += g^T[n,m] * a[m,k]
                         gemm_tn(g.data(), av2.data(), db.data(), n, m, k, true);
                       } else {
                         // db[k,n] += a^T[k,m] * g[m,n]
                         gemm_tn(av2.data(), g.data(), db.data(), k, m, n, true);
                       }
                     }
                   });
}

Var Tape::bmm(Var a, Var b, bool transpose_b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  LIPMARK_CHECK(av.ndim() == 3 && bv.ndim() == 3, ErrorCode::kDimension, "bmm expects rank-3");
  int64_t B = av.dim(0), m = av.dim(1), k = av.dim(2);
  LIPMARK_CHECK(bv.dim(0) == B, ErrorCode::kDimension, "bmm batch mismatch");
  int64_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
  int64_t n = transpose_b ? bv.dim(1) : bv.dim(2);
  LIPMARK_CHECK(bk == k, ErrorCode::kDimension, "bmm inner extents differ");
  Tensor out = Tensor::uninit(Shape{B, m, n});
  const double* pa = av.data();
  const double* pb = bv.data();
  double* po = out.data();
  parallel_for(B, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      MapCRow Am(pa + i * m * k, m, k);
      MapRow Cm(po + i * m * n, m, n);
      if (transpose_b) {
        MapCRow Bm(pb + i * n * k, n, k);
        Cm.noalias() = Am * Bm.transpose();
      } else {
        MapCRow Bm(pb + i * k * n, k, n);
        Cm.noalias() = Am * Bm;
      }
    }
  });
  return make_node(std::move(out), any_grad({a, b}),
                   [a, b, B, m, k, n, transpose_b](Tape& t, const Tensor& g) {
                     const Tensor& av2 = t.val(a);
                     const Tensor& bv2 = t.val(b);
                     const double* pa = av2.data();
                     const double* pb = bv2.data();
                     const double* pg = g.data();
                     if (t.requires_grad(a)) {
                       Tensor& da = t.grad_buffer(a);
                       double* pda = da.data();
                       parallel_for(B, [&](int64_t lo, int64_t hi) {
                         for (int64_t i = lo; i < hi; ++i) {
                           MapCRow Gm(pg + i * m * n, m, n);
                           MapRow Dm(pda + i * m * k, m, k);
                           if (transpose_b) {
                             MapCRow Bm(pb + i * n * k, n, k);
                             Dm.noalias() += Gm * Bm;
                           } else {
                             MapCRow Bm(pb + i * k * n, k, n);
                             Dm.noalias() += Gm * Bm.transpose();
                           }
                         }
                       });
                     }
                     if (t.requires_grad(b)) {
                       Tensor& db = t.grad_buffer(b);
                       double* pdb = db.data();
                       parallel_for(B, [&](int64_t lo, int64_t hi) {
                         for (int64_t i = lo; i < hi; ++i) {
                           MapCRow Gm(pg + i * m * n, m, n);
                           MapCRow Am(pa + i * m * k, m, k);
                           if (transpose_b) {
                             MapRow Dm(pdb + i * n * k, n, k);
                             Dm.noalias() += Gm.transpose() * Am;
                           } else {
                             MapRow Dm(pdb + i * k * n, k, n);
                             Dm.noalias() += Am.transpose() * Gm;
                           }
                         }
                       });
                     }
                   });
}

}  // namespace lipmark
