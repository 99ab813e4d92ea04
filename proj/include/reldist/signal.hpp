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
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/numeric.hpp"
#include "reldist/types.hpp"

namespace reldist {

/// Token-level log-likelihood ratio log pi_T - log pi_S.
inline double token_reward(double logp_teacher, double logp_student) {
  if (!std::isfinite(logp_teacher) || !std::isfinite(logp_student))
    throw DomainError("token_reward: non-finite log-probability");
  return logp_teacher - logp_student;
}

/// log(lambda) / (1 - lambda); -inf when lambda == 0 (clipping disabled).
inline double clip_floor(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("clip_lambda must lie in [0,1)");
  if (lambda == 0.0) return kNegInf;
  return std::log(lambda) / (1.0 - lambda);
}

inline double clip_reward(double reward, double lambda) { return std::max(reward, clip_floor(lambda)); }

/// Upper bound on the reward from the lambda-mixture of teacher and student:
/// (1/(1-lambda)) * log(((1-lambda) pi_T + lambda pi_S) / pi_S), in log space.
inline double mixture_bound(double logp_teacher, double logp_student, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw DomainError("mixture_bound: lambda must lie in [0,1)");
  if (lambda == 0.0) return logp_teacher - logp_student;
  const double mix = logaddexp(std::log1p(-lambda) + logp_teacher, std::log(lambda) + logp_student);
  return (mix - logp_student) / (1.0 - lambda);
}

/// Number of tokens the top-beta rule keeps out of n (nearest rank, at least one).
inline std::size_t top_fraction_count(double beta, std::size_t n) {
  if (n == 0) return 0;
  // The epsilon absorbs representation error in products like 0.2 * 100.
  auto k = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Top-beta threshold: the ceil(beta*N)-th largest entropy.
inline double entropy_threshold(std::span<const double> entropies, double beta) {
  if (entropies.empty()) throw DomainError("entropy_threshold: empty batch");
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("entropy_beta must be in (0,1]");
  std::vector<double> sorted(entropies.begin(), entropies.end());
  const std::size_t k = top_fraction_count(beta, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  return sorted[k - 1];
}

inline std::uint8_t exploration_mask(double reward, double lambda) {
  if (lambda == 0.0) return 1;
  return reward >= clip_floor(lambda) ? 1 : 0;
}

inline std::uint8_t refinement_mask(double entropy, double tau) { return entropy >= tau ? 1 : 0; }

enum class Phase { exploration, refinement };

inline std::string_view to_string(Phase p) { return p == Phase::exploration ? "exploration" : "refinement"; }

struct MaskSchedule {
  std::size_t switch_step = 0;
  double lambda = 0.3;
  double beta = 0.2;
  Scope scope = Scope::batch;  // where tau_beta is computed

  Phase phase_at(std::size_t step) const { return step < switch_step ? Phase::exploration : Phase::refinement; }
};

inline MaskSchedule mask_schedule_of(const RunConfig& cfg) {
  return MaskSchedule{cfg.t_switch(), cfg.lambda(), cfg.beta(), cfg.mask_scope};
}

struct MaskSummary {
  Phase phase = Phase::exploration;
  double tau = std::numeric_limits<double>::quiet_NaN();  // refinement only (batch scope)
  std::size_t kept = 0;
  std::size_t total = 0;
  std::size_t below_floor = 0;  // tokens whose reward the clip raises

  double kept_fraction() const { return total ? static_cast<double>(kept) / static_cast<double>(total) : 0.0; }
  double clipped_fraction() const {
    return total ? static_cast<double>(below_floor) / static_cast<double>(total) : 0.0;
  }
};

/// Fills mask and reward_clipped for every record of the batch at step k.
/// Exploration: keep tokens whose reward is at or above the clip floor.
/// Refinement: keep tokens whose rollout entropy reaches the top-beta threshold.
inline MaskSummary apply_masks(RolloutBatch& batch, std::size_t step, const MaskSchedule& schedule) {
  MaskSummary s;
  s.phase = schedule.phase_at(step);
  const double floor = clip_floor(schedule.lambda);
  batch.for_each_record([&](TokenRecord& r) {
    r.reward_clipped = std::max(r.reward_raw, floor);
    if (r.reward_raw < floor) ++s.below_floor;
    ++s.total;
  });
  if (s.total == 0) return s;

  if (s.phase == Phase::exploration) {
    batch.for_each_record([&](TokenRecord& r) { r.mask = exploration_mask(r.reward_raw, schedule.lambda); });
  } else if (schedule.scope == Scope::batch) {
    std::vector<double> h;
    h.reserve(s.total);
    batch.for_each_record([&](const TokenRecord& r) { h.push_back(r.entropy); });
    s.tau = entropy_threshold(h, schedule.beta);
    batch.for_each_record([&](TokenRecord& r) { r.mask = refinement_mask(r.entropy, s.tau); });
  } else {
    for (std::size_t slot = 0; slot < batch.prompts.size(); ++slot) {
      auto group = batch.group(slot);
      std::vector<double> h;
      for (const auto& ro : group)
        for (const auto& r : ro.records) h.push_back(r.entropy);
      if (h.empty()) continue;
      const double tau = entropy_threshold(h, schedule.beta);
      for (auto& ro : group)
        for (auto& r : ro.records) r.mask = refinement_mask(r.entropy, tau);
    }
  }
  batch.for_each_record([&](const TokenRecord& r) { s.kept += r.mask; });
  return s;
}

}  // namespace reldist
