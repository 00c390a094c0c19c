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

#include "vocab.hpp"

namespace lipmark {

Vocab::Vocab() {
  tokens_ = {"<blank>", "<sos>", "<eos>", " "};
  for (char c = 'a'; c <= 'z'; ++c) tokens_.push_back(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) tokens_.push_back(std::string(1, c));
  for (int& v : index_of_char_) v = -1;
  for (size_t i = 3; i < tokens_.size(); ++i) {
    index_of_char_[static_cast<unsigned char>(tokens_[i][0])] = static_cast<int>(i);
  }
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) {
    int id = index_of_char_[static_cast<unsigned char>(c)];
    LIPMARK_CHECK(id >= 0, ErrorCode::kInvalidArgument,
                  std::string("character not in vocabulary: '") + c + "'");
    out.push_back(id);
  }
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    LIPMARK_CHECK(id >= 0 && id < size(), ErrorCode::kInvalidArgument, "token id out of range");
    if (id <= eos_) continue;  // blank, sos, eos
    out += tokens_[static_cast<size_t>(id)];
  }
  return out;
}

}  // namespace lipmark
