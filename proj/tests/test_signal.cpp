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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reldist/signal.hpp"
#include "reldist/verify.hpp"

namespace reldist {
namespace {

TEST(TokenReward, IsLogRatio) {
  EXPECT_EQ(token_reward(-1.2, -1.2), 0.0);
  EXPECT_NEAR(token_reward(std::log(0.5), std::log(0.25)), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(token_reward(-50.0, std::log(0.5)), -50.0 + 0.6931471805599453, 1e-13);
  EXPECT_NEAR(token_reward(-50.0, std::log(0.5)), -49.3069, 5e-5);
}

TEST(TokenReward, RejectsNonFinite) {
  EXPECT_THROW(token_reward(kNegInf, 0.0), DomainError);
  EXPECT_THROW(token_reward(0.0, std::numeric_limits<double>::quiet_NaN()), DomainError);
}

TEST(ClipFloor, ClosedForm) {
  EXPECT_NEAR(clip_floor(0.3), std::log(0.3) / 0.7, 1e-15);
  EXPECT_NEAR(clip_floor(0.3), -1.71996, 5e-6);
  EXPECT_NEAR(clip_floor(0.5), -1.3862943611198906, 1e-15);
  EXPECT_EQ(clip_floor(0.0), kNegInf);
  EXPECT_THROW(clip_floor(1.0), DomainError);
  EXPECT_THROW(clip_floor(-0.1), DomainError);
}

TEST(ClipFloor, StrictlyIncreasing) {
  double prev = clip_floor(1e-6);
  for (int i = 1; i < 1000; ++i) {
    const double f = clip_floor(1e-6 + (1.0 - 2e-6) * i / 999.0);
    EXPECT_GT(f, prev);
    prev = f;
  }
}

TEST(ClipReward, Examples) {
  EXPECT_EQ(clip_reward(0.0, 0.3), 0.0);
  EXPECT_EQ(clip_reward(-10.0, 0.3), clip_floor(0.3));
  EXPECT_EQ(clip_reward(-1.0, 0.3), -1.0);
  EXPECT_EQ(clip_reward(-1e9, 0.0), -1e9);  // disabled
}

TEST(ClipReward, Idempotent) {
  RngStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double r = 20.0 * rng.normal(), lambda = rng.uniform();
    EXPECT_EQ(clip_reward(clip_reward(r, lambda), lambda), clip_reward(r, lambda));
  }
}

TEST(MixtureBound, EqualPoliciesGiveZero) {
  for (double lp : {-0.1, -2.0, -30.0}) EXPECT_NEAR(mixture_bound(lp, lp, 0.3), 0.0, 1e-15);
}

TEST(MixtureBound, ApproachesFloorWhenTeacherVanishes) {
  // The tail term is (1/0.7) log(1 + (0.7/0.3) * exp(-50) / 0.5) ~ 7e-22.
  EXPECT_NEAR(mixture_bound(-50.0, std::log(0.5), 0.3), std::log(0.3) / 0.7, 1e-6);
  EXPECT_NEAR(mixture_bound(-50.0, std::log(0.5), 0.3), -1.71996, 5e-6);
}

TEST(MixtureBound, LambdaZeroReturnsReward) {
  EXPECT_EQ(mixture_bound(-3.0, -1.0, 0.0), -2.0);
  EXPECT_THROW(mixture_bound(-3.0, -1.0, 1.0), DomainError);
}

TEST(MixtureBound, ChainHoldsOnRandomTriples) {
  RngStream rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double lt = -60.0 * rng.uniform(), ls = -60.0 * rng.uniform(), lambda = 1e-6 + (1.0 - 2e-6) * rng.uniform();
    const double b = mixture_bound(lt, ls, lambda), r = token_reward(lt, ls), f = clip_floor(lambda);
    const double slack = 1e-12 * std::max({1.0, std::abs(r), std::abs(f)});
    EXPECT_LE(r, b + slack);
    EXPECT_GE(b, f - slack);
  }
}

TEST(MixtureBound, MatchesDirectEvaluationWhereItIsSafe) {
  RngStream rng(3);
  for (int i = 0; i < 200; ++i) {
    const double pt = 0.01 + 0.99 * rng.uniform(), ps = 0.01 + 0.99 * rng.uniform(), l = 0.05 + 0.9 * rng.uniform();
    const double direct = std::log(((1 - l) * pt + l * ps) / ps) / (1 - l);
    EXPECT_NEAR(mixture_bound(std::log(pt), std::log(ps), l), direct, 1e-12);
  }
}

TEST(EntropyThreshold, NearestRank) {
  const std::vector<double> h{0.1, 0.5, 0.9, 1.3, 2.0};
  EXPECT_EQ(entropy_threshold(h, 0.4), 1.3);
  EXPECT_EQ(entropy_threshold(h, 1.0), 0.1);
  const std::vector<double> one{0.7};
  EXPECT_EQ(entropy_threshold(one, 0.01), 0.7);
  EXPECT_EQ(entropy_threshold(one, 1.0), 0.7);
  EXPECT_THROW(entropy_threshold(std::vector<double>{}, 0.5), DomainError);
  EXPECT_THROW(entropy_threshold(h, 0.0), DomainError);
}

TEST(EntropyThreshold, MatchesSortOracle) {
  RngStream rng(4);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> h(1 + rng.below(50));
    for (auto& x : h) x = rng.uniform();
    const double beta = 1.0 - rng.uniform();
    std::vector<double> desc = h;
    std::sort(desc.begin(), desc.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(h.size()) - 1e-9));
    EXPECT_EQ(entropy_threshold(h, beta), desc[std::max<std::size_t>(k, 1) - 1]);
  }
}

TEST(EntropyThreshold, TiesKeepEveryTiedToken) {
  const std::vector<double> h{1.0, 1.0, 1.0, 0.5};
  const double tau = entropy_threshold(h, 0.25);
  std::size_t kept = 0;
  for (double x : h) kept += refinement_mask(x, tau);
  EXPECT_EQ(kept, 3u);
}

TEST(Masks, ExplorationExamples) {
  EXPECT_EQ(exploration_mask(-10.0, 0.3), 0);
  EXPECT_EQ(exploration_mask(0.0, 0.3), 1);
  EXPECT_EQ(exploration_mask(clip_floor(0.3), 0.3), 1);
  EXPECT_EQ(exploration_mask(-1e300, 0.0), 1);
}

TEST(Masks, RefinementExamples) {
  EXPECT_EQ(refinement_mask(0.8, 0.8), 1);
  EXPECT_EQ(refinement_mask(0.0, 0.1), 0);
  const std::vector<double> h{0.1, 0.5, 0.9, 1.3, 2.0};
  const double tau = entropy_threshold(h, 0.4);
  std::vector<double> kept;
  for (double x : h)
    if (refinement_mask(x, tau)) kept.push_back(x);
  EXPECT_EQ(kept, (std::vector<double>{1.3, 2.0}));
}

RolloutBatch batch_of(const std::vector<std::vector<std::pair<double, double>>>& trajs, std::size_t prompts,
                      std::size_t group) {
  // Each inner pair is (reward, entropy).
  RolloutBatch b;
  b.group_size = group;
  for (std::size_t s = 0; s < prompts; ++s) b.prompts.push_back(static_cast<PromptId>(s));
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    Rollout ro;
    ro.slot = i / group;
    ro.group_index = i % group;
    ro.traj.prompt = static_cast<PromptId>(ro.slot);
    for (const auto& [r, h] : trajs[i]) {
      ro.traj.tokens.push_back(0);
      TokenRecord rec;
      rec.reward_raw = r;
      rec.entropy = h;
      ro.records.push_back(rec);
    }
    b.rollouts.push_back(std::move(ro));
  }
  return b;
}

TEST(ApplyMasks, ExplorationKeepsEverythingAboveFloor) {
  auto b = batch_of({{{0.0, 0.1}, {-1.0, 0.2}}, {{0.5, 0.3}}}, 1, 2);
  const auto s = apply_masks(b, 0, MaskSchedule{5, 0.3, 0.2, Scope::batch});
  EXPECT_EQ(s.phase, Phase::exploration);
  EXPECT_EQ(s.kept, 3u);
  EXPECT_EQ(s.below_floor, 0u);
  b.for_each_record([](const TokenRecord& r) {
    EXPECT_EQ(r.mask, 1);
    EXPECT_EQ(r.reward_clipped, r.reward_raw);
  });
}

TEST(ApplyMasks, MatchedTeacherPhaseOne) {
  auto b = batch_of({{{0.0, 1.0}, {0.0, 0.2}}, {{0.0, 0.3}}}, 1, 2);
  apply_masks(b, 0, MaskSchedule{1, 0.3, 0.2, Scope::batch});
  b.for_each_record([](const TokenRecord& r) {
    EXPECT_EQ(r.mask, 1);
    EXPECT_EQ(r.reward_clipped, 0.0);
  });
}

TEST(ApplyMasks, PhaseOneMaskedSetIsFlooredSet) {
  auto b = batch_of({{{-10.0, 0.1}, {-1.0, 0.2}, {-1.8, 0.1}}, {{-1.7, 0.3}}}, 1, 2);
  const auto s = apply_masks(b, 3, MaskSchedule{5, 0.3, 0.2, Scope::batch});
  EXPECT_EQ(s.below_floor, 2u);
  EXPECT_EQ(s.kept, 2u);
  b.for_each_record([](const TokenRecord& r) {
    EXPECT_EQ(r.mask == 0, r.reward_raw < clip_floor(0.3));
    EXPECT_EQ(r.reward_clipped, std::max(r.reward_raw, clip_floor(0.3)));
  });
}

TEST(ApplyMasks, PhaseTwoKeepsTopTwentyPercent) {
  RngStream rng(8);
  std::vector<std::vector<std::pair<double, double>>> trajs(10);
  std::vector<double> hs(100);
  for (std::size_t i = 0; i < 100; ++i) hs[i] = static_cast<double>(i) / 100.0;
  for (std::size_t i = 0; i < 100; ++i) std::swap(hs[i], hs[i + rng.below(100 - i)]);
  for (std::size_t i = 0; i < 100; ++i) trajs[i / 10].push_back({-5.0 * rng.uniform(), hs[i]});
  auto b = batch_of(trajs, 2, 5);
  const auto s = apply_masks(b, 5, MaskSchedule{5, 0.3, 0.2, Scope::batch});
  EXPECT_EQ(s.phase, Phase::refinement);
  EXPECT_EQ(s.kept, 20u);
  EXPECT_EQ(s.tau, 0.8);
  b.for_each_record([](const TokenRecord& r) { EXPECT_EQ(r.mask == 1, r.entropy >= 0.8); });
}

TEST(ApplyMasks, GroupScopeThresholdsEachPrompt) {
  auto b = batch_of({{{0.0, 0.1}, {0.0, 0.2}}, {{0.0, 0.3}, {0.0, 0.4}}, {{0.0, 1.1}}, {{0.0, 1.2}}}, 2, 2);
  const auto s = apply_masks(b, 1, MaskSchedule{0, 0.3, 0.25, Scope::group});
  EXPECT_EQ(s.kept, 2u);  // one per prompt
  EXPECT_EQ(b.rollouts[1].records[1].mask, 1);
  EXPECT_EQ(b.rollouts[3].records[0].mask, 1);
  EXPECT_EQ(b.rollouts[2].records[0].mask, 0);
}

TEST(ApplyMasks, EmptyBatchReportsZero) {
  RolloutBatch b;
  const auto s = apply_masks(b, 4, MaskSchedule{1, 0.3, 0.2, Scope::batch});
  EXPECT_EQ(s.total, 0u);
  EXPECT_EQ(s.kept, 0u);
}

TEST(ApplyMasks, MaskCountingOnRandomBatches) {
  const RngStream root(12);
  for (std::size_t i = 0; i < 100; ++i) {
    RngStream rng = root.split(i);
    auto b = random_mask_batch(rng.split(1), 1 + rng.below(4), 1 + rng.below(8));
    const double beta = std::max(0.01, rng.uniform()), lambda = 0.05 + 0.9 * rng.uniform();
    const std::size_t n = b.token_count();
    const auto s2 = apply_masks(b, 1, MaskSchedule{1, lambda, beta, Scope::batch});
    EXPECT_EQ(s2.kept, static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n) - 1e-9)));
    const auto s1 = apply_masks(b, 0, MaskSchedule{1, lambda, beta, Scope::batch});
    b.for_each_record([&](const TokenRecord& r) { EXPECT_EQ(r.mask == 0, r.reward_raw < clip_floor(lambda)); });
    EXPECT_EQ(s1.kept + s1.below_floor, n);
  }
}

TEST(MaskSchedule, PhaseBoundary) {
  const MaskSchedule s{40, 0.3, 0.2, Scope::batch};
  EXPECT_EQ(s.phase_at(39), Phase::exploration);
  EXPECT_EQ(s.phase_at(40), Phase::refinement);
  const MaskSchedule never{0, 0.3, 0.2, Scope::batch};
  EXPECT_EQ(never.phase_at(0), Phase::refinement);
}

}  // namespace
}  // namespace reldist
