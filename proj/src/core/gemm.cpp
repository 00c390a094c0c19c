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

#include "gemm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <functional>

#include "parallel.hpp"

namespace lipmark {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapCRow = Eigen::Map<const RowMat>;

// Chunk size derives from the row count alone (never the thread count), so
// per-chunk kernel shapes and rounding stay identical for any --threads.
int64_t rows_per_chunk(int64_t m) {
  int64_t chunk = (m + 15) / 16;
  return chunk < 64 ? 64 : chunk;
}

void for_chunks(int64_t m, const std::function<void(int64_t, int64_t)>& fn) {
  int64_t chunk = rows_per_chunk(m);
  int64_t nchunks = (m + chunk - 1) / chunk;
  parallel_for(nchunks, [&](int64_t c0, int64_t c1) {
    for (int64_t c = c0; c < c1; ++c) {
      int64_t r0 = c * chunk;
      int64_t r1 = std::min<int64_t>(m, r0 + chunk);
      fn(r0, r1);
    }
  });
}

}  // namespace

void gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
  MapCRow Am(A, m, k), Bm(B, k, n);
  MapRow Cm(C, m, n);
  for_chunks(m, [&](int64_t r0, int64_t r1) {
    if (accumulate) {
      Cm.middleRows(r0, r1 - r0).noalias() += Am.middleRows(r0, r1 - r0) * Bm;
    } else {
      Cm.middleRows(r0, r1 - r0).noalias() = Am.middleRows(r0, r1 - r0) * Bm;
    }
  });
}

void gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
  MapCRow Am(A, m, k), Bm(B, n, k);
  MapRow Cm(C, m, n);
  for_chunks(m, [&](int64_t r0, int64_t r1) {
    if (accumulate) {
      Cm.middleRows(r0, r1 - r0).noalias() += Am.middleRows(r0, r1 - r0) * Bm.transpose();
    } else {
      Cm.middleRows(r0, r1 - r0).noalias() = Am.middleRows(r0, r1 - r0) * Bm.transpose();
    }
  });
}

void gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
  MapCRow Am(A, k, m), Bm(B, k, n);
  MapRow Cm(C, m, n);
  for_chunks(m, [&](int64_t r0, int64_t r1) {
    if (accumulate) {
      Cm.middleRows(r0, r1 - r0).noalias() += Am.middleCols(r0, r1 - r0).transpose() * Bm;
    } else {
      Cm.middleRows(r0, r1 - r0).noalias() = Am.middleCols(r0, r1 - r0).transpose() * Bm;
    }
  });
}

}  // namespace lipmark
