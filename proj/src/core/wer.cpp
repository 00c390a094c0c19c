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

#include "wer.hpp"

#include <sstream>

#include "error.hpp"

namespace lipmark {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::stringstream ss(text);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

WerBreakdown edit_alignment(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp) {
  LIPMARK_CHECK(!ref.empty(), ErrorCode::kInvalidArgument, "empty reference in edit_alignment");
  size_t n = ref.size(), m = hyp.size();
  // cost[i][j]: edits aligning ref[0..i) to hyp[0..j)
  std::vector<std::vector<int32_t>> cost(n + 1, std::vector<int32_t>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int32_t>(i);
  for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int32_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      int32_t sub = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int32_t ins = cost[i][j - 1] + 1;  // extra hyp word
      int32_t del = cost[i - 1][j] + 1;  // missing hyp word
      cost[i][j] = std::min({sub, ins, del});
    }
  }
  // backtrace with documented tie preference: substitution > insertion > deletion
  WerBreakdown out;
  out.ref_words = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (j > 0 && cost[i][j] == cost[i][j - 1] + 1) {
      ++out.insertions;
      --j;
    } else {
      ++out.deletions;
      --i;
    }
  }
  out.wer = 100.0 * static_cast<double>(out.errors()) / static_cast<double>(out.ref_words);
  return out;
}

WerBreakdown edit_alignment(const std::string& ref_text, const std::string& hyp_text) {
  return edit_alignment(split_words(ref_text), split_words(hyp_text));
}

}  // namespace lipmark
