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
#include <functional>

namespace lipmark {

// Process-wide worker count for data-parallel loops. Default 1.
void set_thread_count(int n);
int thread_count();

// Runs fn(begin, end) over a partition of [0, n). Workers own disjoint index
// ranges, so results are bit-identical for any thread count as long as fn
// writes only to locations indexed by its range.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace lipmark
