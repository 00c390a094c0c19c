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

#include <vector>

#include "tape.hpp"

namespace lipmark {

// Frames required for any valid alignment: |target| plus one separator blank
// per adjacent repeat.
int64_t ctc_min_frames(const std::vector<int>& target);

// -log p(target | logits) under the usual blank-interleaved alignment
// lattice; softmax over the vocabulary is applied internally. Computed by the
// forward-backward recursion in log space. Throws kInfeasible when the clip
// is shorter than ctc_min_frames.
double ctc_loss_value(const Tensor& logits, const std::vector<int>& target, int blank = 0);

// Tape op version; gradient w.r.t. logits is softmax minus the alignment
// posterior.
Var ctc_loss_op(Tape& t, Var logits, const std::vector<int>& target, int blank = 0);

// Exhaustive oracle: enumerates every length-T labeling (V^T <= 1e6),
// collapses repeats then strips blanks, and sums the probability of those
// matching the target. Returns -log of the sum (+inf if no labeling matches).
double ctc_brute_force(const Tensor& logits, const std::vector<int>& target, int blank = 0);

}  // namespace lipmark
