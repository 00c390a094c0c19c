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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <map>

#include "error.hpp"
#include "rng.hpp"
#include "wer.hpp"

using namespace lipmark;

TEST_CASE("edit alignment closed forms") {
  WerBreakdown same = edit_alignment("bin blue at f two now", "bin blue at f two now");
  CHECK(same.substitutions == 0);
  CHECK(same.deletions == 0);
  CHECK(same.insertions == 0);
  CHECK(same.wer == 0.0);

  WerBreakdown sub = edit_alignment("bin blue at f two now", "bin red at f two now");
  CHECK(sub.substitutions == 1);
  CHECK(sub.errors() == 1);
  CHECK(sub.wer == doctest::Approx(100.0 / 6.0).epsilon(1e-9));

  WerBreakdown del = edit_alignment("bin blue at f two now", "");
  CHECK(del.deletions == 6);
  CHECK(del.wer == doctest::Approx(100.0));

  WerBreakdown ins = edit_alignment("bin", "bin bin bin");
  CHECK(ins.insertions == 2);

  CHECK_THROWS_AS(edit_alignment("", "something"), Error);
}

TEST_CASE("alignment symmetry: swapping ref and hyp swaps I and D") {
  std::vector<std::pair<std::string, std::string>> cases = {
      {"bin blue at f two now", "bin blue f two"},
      {"place red by x one soon", "place red red by one soon again"},
      {"lay green with q nine please", "set green with nine"},
  };
  for (const auto& [a, b] : cases) {
    WerBreakdown ab = edit_alignment(a, b);
    WerBreakdown ba = edit_alignment(b, a);
    CHECK(ab.errors() == ba.errors());
    CHECK(ab.substitutions == ba.substitutions);
    CHECK(ab.insertions == ba.deletions);
    CHECK(ab.deletions == ba.insertions);
  }
}

TEST_CASE("alignment on identical inputs is zero for random sentences") {
  Rng rng(5);
  const char* words[] = {"bin", "blue", "at", "f", "two", "now", "set", "white"};
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> sent;
    int len = 1 + static_cast<int>(rng.below(7));
    for (int k = 0; k < len; ++k) sent.push_back(words[rng.below(8)]);
    WerBreakdown w = edit_alignment(sent, sent);
    CHECK(w.errors() == 0);
  }
}

TEST_CASE("corpus aggregation identity on a three-sample toy report") {
  // aggregate = total errors / total reference words, not mean of rates
  struct Row {
    std::string ref, hyp;
  };
  std::vector<Row> rows = {
      {"bin blue at f two now", "bin blue at f two now"},  // 0 of 6
      {"set red by q one soon", "set red by one soon"},    // 1 of 6 (deletion)
      {"lay green in p five please", "lay green in p nine again"},  // 2 of 6 (subs)
  };
  int64_t errors = 0, words = 0;
  double mean_of_rates = 0.0;
  for (const Row& r : rows) {
    WerBreakdown w = edit_alignment(r.ref, r.hyp);
    errors += w.errors();
    words += w.ref_words;
    mean_of_rates += w.wer / 3.0;
  }
  double corpus_wer = 100.0 * static_cast<double>(errors) / static_cast<double>(words);
  CHECK(corpus_wer == doctest::Approx(100.0 * 3.0 / 18.0).epsilon(1e-12));
  // hand-computed: both aggregates agree here because every ref has 6 words
  CHECK(corpus_wer == doctest::Approx(mean_of_rates).epsilon(1e-12));

  // with unequal lengths they differ, and the corpus number is the contract
  rows.push_back({"bin", "set"});
  errors = 0;
  words = 0;
  for (const Row& r : rows) {
    WerBreakdown w = edit_alignment(r.ref, r.hyp);
    errors += w.errors();
    words += w.ref_words;
  }
  CHECK(100.0 * static_cast<double>(errors) / static_cast<double>(words) ==
        doctest::Approx(100.0 * 4.0 / 19.0).epsilon(1e-12));
}

TEST_CASE("per-speaker rows weighted by reference words reproduce corpus WER") {
  struct Entry {
    int speaker;
    std::string ref, hyp;
  };
  std::vector<Entry> entries = {
      {0, "bin blue at f two now", "bin blue at f two now"},
      {0, "set red by q one soon", "set red by one soon"},
      {1, "lay green in p five please", "lay green in p nine again"},
      {1, "place white with x seven again", "place white with x seven again"},
  };
  std::map<int, WerBreakdown> per_speaker;
  WerBreakdown corpus;
  for (const Entry& e : entries) {
    WerBreakdown w = edit_alignment(e.ref, e.hyp);
    for (WerBreakdown* acc : {&per_speaker[e.speaker], &corpus}) {
      acc->substitutions += w.substitutions;
      acc->deletions += w.deletions;
      acc->insertions += w.insertions;
      acc->ref_words += w.ref_words;
    }
  }
  double weighted = 0.0;
  for (auto& [spk, w] : per_speaker) {
    w.wer = 100.0 * static_cast<double>(w.errors()) / static_cast<double>(w.ref_words);
    weighted += w.wer * static_cast<double>(w.ref_words);
  }
  weighted /= static_cast<double>(corpus.ref_words);
  corpus.wer = 100.0 * static_cast<double>(corpus.errors()) / static_cast<double>(corpus.ref_words);
  CHECK(weighted == doctest::Approx(corpus.wer).epsilon(1e-12));
}
