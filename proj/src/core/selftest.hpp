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

#include <ostream>

namespace lipmark {

// Built-in numeric checks: CTC forward DP against the exhaustive oracle,
// finite-difference gradient checks for each layer kind and a micro
// front-end, and the MI estimator closed forms. Prints one line per check;
// returns true if everything passed.
bool run_selftest(std::ostream& out);

}  // namespace lipmark
