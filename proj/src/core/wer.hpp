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
#include <string>
#include <vector>

namespace lipmark {

// Word-level minimal edit alignment. wer is in percent: 100*(S+D+I)/N.
struct WerBreakdown {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t ref_words = 0;
  double wer = 0.0;

  int64_t errors() const { return substitutions + deletions + insertions; }
};

std::vector<std::string> split_words(const std::string& text);

// Levenshtein alignment at word granularity. Ties in the backtrace prefer
// substitution over insertion over deletion. Empty ref is an argument error.
WerBreakdown edit_alignment(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp);
WerBreakdown edit_alignment(const std::string& ref_text, const std::string& hyp_text);

}  // namespace lipmark
