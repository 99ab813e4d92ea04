// Copyright 2026 The reldist Authors
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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace reldist {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logsumexp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const auto top = std::max_element(xs.begin(), xs.end());
  const double hi = *top;
  if (!std::isfinite(hi)) return hi;
  // Summing everything but the maximum keeps tails far below 1 ulp of 1.
  double acc = 0.0;
  for (auto it = xs.begin(); it != xs.end(); ++it)
    if (it != top) acc += std::exp(*it - hi);
  return hi + std::log1p(acc);
}

/// log(exp(a) + exp(b)) without overflow.
inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

/// Replaces logits by their log-softmax.
inline void log_softmax_inplace(std::span<double> xs) {
  if (xs.empty()) return;
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) {
    const double lse = logsumexp(xs);
    for (double& x : xs) x -= lse;
    return;
  }
  // Shift first so the dominant entry keeps its tiny log1p correction.
  for (double& x : xs) x -= hi;
  const double tail = logsumexp(xs);
  for (double& x : xs) x -= tail;
}

/// Shannon entropy (nats) of the distribution given by log-probabilities.
inline double entropy_of(std::span<const double> logprobs) {
  double h = 0.0;
  for (double lp : logprobs) {
    if (lp == kNegInf) continue;
    h -= std::exp(lp) * lp;
  }
  return std::max(h, 0.0);
}

inline double l2_norm(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x * x;
  return std::sqrt(acc);
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

/// ||a - b|| / max(||a||, ||b||, tiny); 0 when both vectors vanish.
inline double relative_difference(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max({l2_norm(a), l2_norm(b), 1e-300});
  return std::sqrt(diff) / scale;
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace reldist
