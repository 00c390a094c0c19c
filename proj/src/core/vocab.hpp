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

#include <string>
#include <vector>

#include "error.hpp"

namespace lipmark {

// Character vocabulary: blank, sos, eos, space, a-z, 0-9 (40 tokens).
// Blank is fixed at index 0.
class Vocab {
 public:
  Vocab();

  static constexpr int kBlank = 0;
  int sos() const { return sos_; }
  int eos() const { return eos_; }
  int size() const { return static_cast<int>(tokens_.size()); }

  // Encodes lowercase text (letters, digits, spaces) to token ids,
  // excluding sos/eos/blank.
  std::vector<int> encode(const std::string& text) const;
  // Decodes token ids to text, skipping blank/sos/eos.
  std::string decode(const std::vector<int>& ids) const;

  const std::string& token_name(int id) const { return tokens_[static_cast<size_t>(id)]; }

 private:
  std::vector<std::string> tokens_;
  int index_of_char_[256];
  int sos_ = 1;
  int eos_ = 2;
};

}  // namespace lipmark
