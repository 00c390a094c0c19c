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

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lipmark {

// Counter-style splitmix64 generator. Streams are derived functionally from
// (seed, tags...), so no generator state ever needs to be serialized: a
// training step, a corpus sample, or a parameter draw each owns a stream
// named by its coordinates.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Derives an independent stream from this one, keyed by tag values.
  Rng child(uint64_t tag) const { return Rng(mix(state_ ^ mix(tag + 0x632be59bd9b4e019ull))); }
  Rng child(std::string_view tag) const { return child(hash_tag(tag)); }
  Rng child(std::string_view tag, uint64_t a) const { return child(hash_tag(tag)).child(a); }
  Rng child(std::string_view tag, uint64_t a, uint64_t b) const {
    return child(hash_tag(tag)).child(a).child(b);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; draws exactly two uniforms per call so the
  // stream position is a pure function of the call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  static uint64_t hash_tag(std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace lipmark
