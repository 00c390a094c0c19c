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

#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace lipmark {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    LIPMARK_CHECK(d > 0, ErrorCode::kDimension, "non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  if (empty()) return true;
  const double* p = data();
  for (int64_t i = 0; i < numel(); ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

double Tensor::max_abs() const {
  if (empty()) return 0.0;
  double m = 0.0;
  const double* p = data();
  for (int64_t i = 0; i < numel(); ++i) {
    double a = std::fabs(p[i]);
    if (a > m) m = a;
  }
  return m;
}

}  // namespace lipmark
