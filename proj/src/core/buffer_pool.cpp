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

#include "buffer_pool.hpp"

#include <mutex>
#include <unordered_map>
#include <vector>

namespace lipmark {
namespace {

struct PoolState {
  std::mutex mu;
  std::unordered_map<size_t, std::vector<double*>> free_lists;
  size_t cached_bytes = 0;
};

PoolState& pool() {
  static PoolState* s = new PoolState();
  return *s;
}

// Blocks below this size go straight to the allocator; pooling only pays for
// large activations.
constexpr size_t kMinPooled = 1 << 14;
constexpr size_t kMaxCachedBytes = size_t(6) << 30;

void release(size_t n, double* p) {
  PoolState& s = pool();
  std::lock_guard<std::mutex> lock(s.mu);
  if (s.cached_bytes + n * sizeof(double) > kMaxCachedBytes) {
    delete[] p;
    return;
  }
  s.free_lists[n].push_back(p);
  s.cached_bytes += n * sizeof(double);
}

}  // namespace

std::shared_ptr<double[]> acquire_buffer(size_t n) {
  if (n < kMinPooled) {
    return std::shared_ptr<double[]>(new double[n], std::default_delete<double[]>());
  }
  double* p = nullptr;
  {
    PoolState& s = pool();
    std::lock_guard<std::mutex> lock(s.mu);
    auto it = s.free_lists.find(n);
    if (it != s.free_lists.end() && !it->second.empty()) {
      p = it->second.back();
      it->second.pop_back();
      s.cached_bytes -= n * sizeof(double);
    }
  }
  if (p == nullptr) p = new double[n];
  return std::shared_ptr<double[]>(p, [n](double* q) { release(n, q); });
}

void trim_buffer_pool() {
  PoolState& s = pool();
  std::lock_guard<std::mutex> lock(s.mu);
  for (auto& [n, list] : s.free_lists) {
    for (double* p : list) delete[] p;
    list.clear();
  }
  s.cached_bytes = 0;
}

}  // namespace lipmark
