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
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "reldist/policy.hpp"
#include "reldist/rng.hpp"
#include "reldist/trainer.hpp"
#include "reldist/types.hpp"
#include "reldist/verify.hpp"

namespace reldist::testing {

/// Single-prompt policy over toy_vocabulary(v) with every logit drawn from N(0, scale^2).
inline PolicyParams random_policy(std::uint64_t seed, std::size_t v, StudentFamily family = StudentFamily::tabular,
                                  std::size_t order = 2, std::size_t prompts = 1, double scale = 1.0) {
  PolicyParams p(family, order, toy_vocabulary(v), prompts);
  RngStream rng(seed);
  fill_normal(p, rng, scale);
  return p;
}

inline bool same_bits(double a, double b) {
  std::uint64_t x, y;
  std::memcpy(&x, &a, sizeof x);
  std::memcpy(&y, &b, sizeof y);
  return x == y;
}

inline bool same_bits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_bits(a[i], b[i])) return false;
  return true;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("reldist_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Batch of one prompt and one trajectory with the given records.
inline RolloutBatch single_trajectory_batch(std::vector<TokenId> tokens, std::vector<TokenRecord> records) {
  RolloutBatch b;
  b.prompts = {0};
  b.group_size = 1;
  Rollout ro;
  ro.traj.prompt = 0;
  ro.traj.tokens = std::move(tokens);
  ro.records = std::move(records);
  b.rollouts.push_back(std::move(ro));
  return b;
}

/// Mean squared deviation from the sample mean of per-trajectory gradient
/// estimates, for the vanilla and stop-gradient estimators on the same draws.
struct SpreadPair {
  double vanilla = 0.0;
  double sg = 0.0;
  double vanilla_mean_sq_norm = 0.0;
  double sg_max_abs = 0.0;
};

inline SpreadPair single_trajectory_spread(const PolicyParams& student, const PolicyParams& teacher, std::size_t max_len,
                                           std::size_t draws, std::uint64_t seed) {
  const std::vector<PromptId> prompt{0};
  const RngStream root(seed);
  std::vector<std::vector<double>> gv, gs;
  SpreadPair out;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto batch = generate_rollouts(student, student, teacher, prompt, 1, max_len, root.split(i));
    gv.push_back(grad_vanilla_rkl(batch, student).grad);
    gs.push_back(grad_sg_rkl(batch, student).grad);
    double sq = 0.0;
    for (double x : gv.back()) sq += x * x;
    out.vanilla_mean_sq_norm += sq / static_cast<double>(draws);
    for (double x : gs.back()) out.sg_max_abs = std::max(out.sg_max_abs, std::abs(x));
  }
  auto spread = [&](const std::vector<std::vector<double>>& g) {
    std::vector<double> mean(g.front().size(), 0.0);
    for (const auto& v : g)
      for (std::size_t j = 0; j < v.size(); ++j) mean[j] += v[j] / static_cast<double>(g.size());
    double acc = 0.0;
    for (const auto& v : g)
      for (std::size_t j = 0; j < v.size(); ++j) acc += (v[j] - mean[j]) * (v[j] - mean[j]);
    return acc / static_cast<double>(g.size());
  };
  out.vanilla = spread(gv);
  out.sg = spread(gs);
  return out;
}

}  // namespace reldist::testing
