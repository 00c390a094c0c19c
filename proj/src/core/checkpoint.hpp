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
#include <map>
#include <string>

#include "tensor.hpp"

namespace lipmark {

// Self-describing binary container: little-endian, versioned header, named
// tensor tables plus a config text blob and scalar training state.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  std::string config_text;
  std::map<std::string, Tensor> params;     // model parameters (+ running stats)
  std::map<std::string, Tensor> opt_state;  // optimizer moments
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint32_t stage = 1;
  uint64_t seed = 0;
  uint64_t adam_t = 0;
  double best_dev_wer = -1.0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace lipmark
