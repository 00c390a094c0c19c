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

#include <cstdint>

namespace lipmark {

// Row-major double GEMM wrappers. Work is split into fixed-size row chunks,
// so per-chunk kernel shapes (and therefore rounding) do not depend on the
// thread count.

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n,
             bool accumulate);

}  // namespace lipmark
