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

#include <cstddef>
#include <memory>

namespace lipmark {

// Recycling allocator for tensor storage. Training repeats identical shapes
// every step; reusing blocks avoids the mmap/page-fault churn of cycling
// 100MB+ activations through malloc. Contents are uninitialized.
std::shared_ptr<double[]> acquire_buffer(size_t n);

// Drops all cached blocks (mainly for tests / memory pressure).
void trim_buffer_pool();

}  // namespace lipmark
