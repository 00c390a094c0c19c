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

#include "ctc.hpp"

#include <cmath>
#include <limits>

namespace lipmark {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsum2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsum3(double a, double b, double c) { return logsum2(logsum2(a, b), c); }

struct CtcWork {
  int64_t frames, vocab, states;
  std::vector<int> labels;        // label per lattice state
  std::vector<double> log_probs;  // [T, V] log softmax
  std::vector<double> alpha;      // [T, S]
  std::vector<double> beta;       // [T, S]
  double log_z = kNegInf;
};

// Forward-backward over the blank-interleaved lattice.
CtcWork ctc_forward_backward(const Tensor& logits, const std::vector<int>& target, int blank) {
  LIPMARK_CHECK(logits.ndim() == 2, ErrorCode::kDimension, "ctc expects logits [T,V]");
  CtcWork w;
  w.frames = logits.dim(0);
  w.vocab = logits.dim(1);
  for (int y : target) {
    LIPMARK_CHECK(y >= 0 && y < w.vocab && y != blank, ErrorCode::kInvalidArgument,
                  "ctc target symbol out of range");
  }
  LIPMARK_CHECK(w.frames >= ctc_min_frames(target), ErrorCode::kInfeasible,
                "target needs " + std::to_string(ctc_min_frames(target)) +
                    " frames but clip has " + std::to_string(w.frames));
  int64_t L = static_cast<int64_t>(target.size());
  w.states = 2 * L + 1;
  w.labels.resize(static_cast<size_t>(w.states));
  for (int64_t s = 0; s < w.states; ++s) {
    w.labels[static_cast<size_t>(s)] = (s % 2 == 0) ? blank : target[static_cast<size_t>(s / 2)];
  }

  // log softmax per frame
  w.log_probs.resize(static_cast<size_t>(w.frames * w.vocab));
  for (int64_t t = 0; t < w.frames; ++t) {
    const double* row = logits.data() + t * w.vocab;
    double m = row[0];
    for (int64_t k = 1; k < w.vocab; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int64_t k = 0; k < w.vocab; ++k) z += std::exp(row[k] - m);
    double lz = m + std::log(z);
    for (int64_t k = 0; k < w.vocab; ++k) w.log_probs[t * w.vocab + k] = row[k] - lz;
  }
  auto lp = [&](int64_t t, int64_t s) {
    return w.log_probs[t * w.vocab + w.labels[static_cast<size_t>(s)]];
  };
  auto can_skip = [&](int64_t s) {
    // diagonal transition s-2 -> s allowed for non-blank states whose label
    // differs from the previous non-blank
    return s >= 3 && s % 2 == 1 &&
           w.labels[static_cast<size_t>(s)] != w.labels[static_cast<size_t>(s - 2)];
  };

  w.alpha.assign(static_cast<size_t>(w.frames * w.states), kNegInf);
  w.alpha[0] = lp(0, 0);
  if (w.states > 1) w.alpha[1] = lp(0, 1);
  for (int64_t t = 1; t < w.frames; ++t) {
    const double* prev = w.alpha.data() + (t - 1) * w.states;
    double* cur = w.alpha.data() + t * w.states;
    for (int64_t s = 0; s < w.states; ++s) {
      double stay = prev[s];
      double step = s >= 1 ? prev[s - 1] : kNegInf;
      double skip = can_skip(s) ? prev[s - 2] : kNegInf;
      double acc = logsum3(stay, step, skip);
      cur[s] = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  double zl = w.alpha[(w.frames - 1) * w.states + (w.states - 1)];
  double z2 = w.states > 1 ? w.alpha[(w.frames - 1) * w.states + (w.states - 2)] : kNegInf;
  w.log_z = logsum2(zl, z2);
  LIPMARK_CHECK(std::isfinite(w.log_z), ErrorCode::kInfeasible, "no feasible ctc alignment");

  w.beta.assign(static_cast<size_t>(w.frames * w.states), kNegInf);
  double* last = w.beta.data() + (w.frames - 1) * w.states;
  last[w.states - 1] = lp(w.frames - 1, w.states - 1);
  if (w.states > 1) last[w.states - 2] = lp(w.frames - 1, w.states - 2);
  for (int64_t t = w.frames - 2; t >= 0; --t) {
    const double* next = w.beta.data() + (t + 1) * w.states;
    double* cur = w.beta.data() + t * w.states;
    for (int64_t s = 0; s < w.states; ++s) {
      double stay = next[s];
      double step = s + 1 < w.states ? next[s + 1] : kNegInf;
      double skip = (s + 2 < w.states && can_skip(s + 2)) ? next[s + 2] : kNegInf;
      double acc = logsum3(stay, step, skip);
      cur[s] = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  return w;
}

}  // namespace

int64_t ctc_min_frames(const std::vector<int>& target) {
  int64_t repeats = 0;
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  return static_cast<int64_t>(target.size()) + repeats;
}

double ctc_loss_value(const Tensor& logits, const std::vector<int>& target, int blank) {
  return -ctc_forward_backward(logits, target, blank).log_z;
}

Var ctc_loss_op(Tape& t, Var logits, const std::vector<int>& target, int blank) {
  CtcWork w = ctc_forward_backward(t.val(logits), target, blank);
  // d(-log Z)/d logits = softmax - posterior
  Tensor dlogits = Tensor::uninit(Shape{w.frames, w.vocab});
  for (int64_t tt = 0; tt < w.frames; ++tt) {
    double* row = dlogits.data() + tt * w.vocab;
    for (int64_t k = 0; k < w.vocab; ++k) row[k] = std::exp(w.log_probs[tt * w.vocab + k]);
    for (int64_t s = 0; s < w.states; ++s) {
      double ab = w.alpha[tt * w.states + s] + w.beta[tt * w.states + s];
      if (ab == kNegInf) continue;
      // alpha and beta both include the emission at tt; drop one copy
      double post = std::exp(ab - w.log_probs[tt * w.vocab + w.labels[static_cast<size_t>(s)]] -
                             w.log_z);
      row[w.labels[static_cast<size_t>(s)]] -= post;
    }
  }
  return t.custom(Tensor::scalar(-w.log_z), {logits},
                  [logits, dlogits](Tape& tape, const Tensor& g) {
                    Tensor scaled = dlogits;
                    double gv = g[0];
                    double* p = scaled.data();
                    for (int64_t i = 0; i < scaled.numel(); ++i) p[i] *= gv;
                    tape.accum_grad(logits, std::move(scaled));
                  });
}

double ctc_brute_force(const Tensor& logits, const std::vector<int>& target, int blank) {
  LIPMARK_CHECK(logits.ndim() == 2, ErrorCode::kDimension, "ctc expects logits [T,V]");
  int64_t frames = logits.dim(0), vocab = logits.dim(1);
  double paths = std::pow(static_cast<double>(vocab), static_cast<double>(frames));
  LIPMARK_CHECK(paths <= 1e6, ErrorCode::kCapacity, "brute-force ctc grid too large");

  // per-frame probabilities
  std::vector<double> probs(static_cast<size_t>(frames * vocab));
  for (int64_t t = 0; t < frames; ++t) {
    const double* row = logits.data() + t * vocab;
    double m = row[0];
    for (int64_t k = 1; k < vocab; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int64_t k = 0; k < vocab; ++k) z += std::exp(row[k] - m);
    for (int64_t k = 0; k < vocab; ++k) probs[t * vocab + k] = std::exp(row[k] - m) / z;
  }

  std::vector<int64_t> seq(static_cast<size_t>(frames), 0);
  std::vector<int> collapsed;
  double total = 0.0;
  int64_t count = static_cast<int64_t>(paths);
  for (int64_t n = 0; n < count; ++n) {
    int64_t rem = n;
    for (int64_t t = 0; t < frames; ++t) {
      seq[static_cast<size_t>(t)] = rem % vocab;
      rem /= vocab;
    }
    collapsed.clear();
    int64_t prev = -1;
    for (int64_t t = 0; t < frames; ++t) {
      int64_t s = seq[static_cast<size_t>(t)];
      if (s != prev && s != blank) collapsed.push_back(static_cast<int>(s));
      prev = s;
    }
    bool match = collapsed.size() == target.size() &&
                 std::equal(collapsed.begin(), collapsed.end(), target.begin());
    if (match) {
      double p = 1.0;
      for (int64_t t = 0; t < frames; ++t) p *= probs[t * vocab + seq[static_cast<size_t>(t)]];
      total += p;
    }
  }
  return total > 0.0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

}  // namespace lipmark
