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

#include <cmath>
#include <vector>

#include "reldist/oracle.hpp"
#include "reldist/tasks.hpp"
#include "reldist/trainer.hpp"
#include "support.hpp"

namespace reldist {
namespace {

const std::vector<TokenId> kRoot;

TEST(Enumerate, TwoTokenVocabulary) {
  const PolicyParams p(StudentFamily::tabular, 1, Vocabulary({"<bos>", "<eos>"}, 0, 1), 1);
  const auto all = enumerate_trajectories(EnumerationDomain{0, 1}, p);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].prob, 0.5);
  EXPECT_EQ(all[1].prob, 0.5);
  EXPECT_NE(all[0].traj.terminated, all[1].traj.terminated);
}

TEST(Enumerate, UniformThreeTokensLengthTwo) {
  const PolicyParams p(StudentFamily::tabular, 2, toy_vocabulary(3), 1);
  const auto all = enumerate_trajectories(EnumerationDomain{0, 2}, p);
  // [eos] plus two first tokens times three second tokens.
  ASSERT_EQ(all.size(), 7u);
  double mass = 0.0;
  for (const auto& w : all) {
    const double want = w.traj.length() == 1 ? 1.0 / 3.0 : 1.0 / 9.0;
    EXPECT_NEAR(w.prob, want, 1e-15);
    mass += w.prob;
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Enumerate, DeterministicPolicyHasOneTrajectory) {
  PolicyParams p(StudentFamily::tabular, 1, toy_vocabulary(4), 1);
  for (std::size_t f = 0; f < p.feature_count(); ++f) p.row(f)[1] = 60.0;
  const auto all = enumerate_trajectories(EnumerationDomain{0, 3}, p);
  std::size_t live = 0;
  for (const auto& w : all)
    if (w.prob > 1e-20) {
      ++live;
      EXPECT_EQ(w.traj.tokens, (std::vector<TokenId>{1, 1, 1}));
      EXPECT_NEAR(w.prob, 1.0, 1e-20);
    }
  EXPECT_EQ(live, 1u);
}

TEST(Enumerate, ProbabilitiesMatchSequenceLogProb) {
  const auto p = testing::random_policy(5, 4, StudentFamily::ngram_bias, 2, 1, 2.0);
  double mass = 0.0;
  for (const auto& w : enumerate_trajectories(EnumerationDomain{0, 3}, p)) {
    EXPECT_NEAR(std::log(w.prob), sequence_log_prob(p, w.traj), 1e-12);
    mass += w.prob;
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Enumerate, GuardRejectsLargeDomains) {
  const PolicyParams big(StudentFamily::tabular, 1, toy_vocabulary(6), 1);
  EXPECT_THROW(enumerate_trajectories(EnumerationDomain{0, 2}, big), DomainError);
  const PolicyParams p(StudentFamily::tabular, 1, toy_vocabulary(3), 1);
  EXPECT_THROW(enumerate_trajectories(EnumerationDomain{0, 5}, p), DomainError);
  EXPECT_THROW(enumerate_trajectories(EnumerationDomain{0, 0}, p), DomainError);
  EXPECT_THROW(enumerate_trajectories(EnumerationDomain{1, 2}, p), DomainError);
}

TEST(ExactRkl, IdentityIsZero) {
  const auto p = testing::random_policy(6, 5, StudentFamily::tabular, 2, 1);
  EXPECT_NEAR(exact_rkl(p, p, EnumerationDomain{0, 3}), 0.0, 1e-15);
}

TEST(ExactRkl, TwoOutcomeHandValue) {
  const Vocabulary vocab({"a", "<eos>"}, 0, 1);
  PolicyParams s(StudentFamily::tabular, 1, vocab, 1), t = s;
  const double ls[] = {std::log(0.75), std::log(0.25)};
  s.set_context_logits(0, kRoot, ls);
  const double want = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  EXPECT_NEAR(exact_rkl(s, t, EnumerationDomain{0, 1}), want, 1e-15);
  EXPECT_NEAR(want, 0.13081, 5e-6);
}

TEST(ExactRkl, NonNegativeOnRandomPairs) {
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto inst = random_instance(RngStream(i), 3 + i % 3, 1 + i % 3);
    EXPECT_GE(exact_rkl(inst.student, inst.teacher, inst.domain), 0.0);
  }
}

TEST(ExactGradient, VanillaEqualsSgOnRandomInstances) {
  for (std::uint64_t i = 0; i < 25; ++i) {
    const auto inst = random_instance(RngStream(100 + i), 3 + i % 2, 2 + i % 2,
                                      i % 2 ? StudentFamily::ngram_bias : StudentFamily::tabular);
    const auto gv = exact_expected_gradient(Estimator::vanilla_rkl, inst.student, inst.teacher, inst.domain);
    const auto gs = exact_expected_gradient(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain);
    EXPECT_LE(relative_difference(gv, gs), 1e-8);
    EXPECT_GT(l2_norm(gs), 1e-6);
  }
}

TEST(ExactGradient, MatchedTeacherGivesZero) {
  const auto p = testing::random_policy(8, 4, StudentFamily::tabular, 2, 1);
  for (Estimator e : {Estimator::vanilla_rkl, Estimator::sg_rkl})
    EXPECT_LE(l2_norm(exact_expected_gradient(e, p, p, EnumerationDomain{0, 3})), 1e-14);
}

TEST(ExactGradient, MatchesFiniteDifferencesOfObjective) {
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto inst = random_instance(RngStream(200 + i), 3 + i % 2, 2 + i % 2);
    ExactOptions eo;
    eo.behavior = eo.reward_anchor = &inst.student;
    const auto fd = fd_gradient(
        [&](const PolicyParams& q) { return exact_objective(Estimator::sg_rkl, q, inst.teacher, inst.domain, eo); },
        inst.student, 1e-5);
    const auto g = exact_expected_gradient(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain);
    EXPECT_LE(max_abs_difference(fd, g), 1e-5);
    // The vanilla surrogate re-evaluates R at theta, and its derivative is the same gradient.
    ExactOptions ev;
    ev.behavior = &inst.student;
    const auto fdv = fd_gradient(
        [&](const PolicyParams& q) { return exact_objective(Estimator::vanilla_rkl, q, inst.teacher, inst.domain, ev); },
        inst.student, 1e-5);
    EXPECT_LE(max_abs_difference(fdv, g), 1e-5);
  }
}

TEST(ExactGradient, ReopoldMatchesFiniteDifferencesWithFrozenMasks) {
  for (std::uint64_t i = 0; i < 6; ++i) {
    const auto inst = random_instance(RngStream(300 + i), 4, 3, StudentFamily::tabular, 3.0);
    ExactOptions eo;
    eo.behavior = eo.reward_anchor = &inst.student;
    eo.lambda = 0.3;
    if (i % 2) eo.tau = 0.5;
    const auto fd = fd_gradient(
        [&](const PolicyParams& q) { return exact_objective(Estimator::reopold, q, inst.teacher, inst.domain, eo); },
        inst.student, 1e-5);
    const auto g = exact_expected_gradient(Estimator::reopold, inst.student, inst.teacher, inst.domain, eo);
    EXPECT_LE(max_abs_difference(fd, g), 1e-5);
  }
}

TEST(ExactGradient, PerSequenceNormalizationBreaksEquivalence) {
  // With 1/|o| inside the expectation the control-variate term no longer has zero mean.
  const auto inst = random_instance(RngStream(7), 4, 3);
  ExactOptions eo;
  eo.norm = Normalization::per_sequence;
  const auto gv = exact_expected_gradient(Estimator::vanilla_rkl, inst.student, inst.teacher, inst.domain, eo);
  const auto gs = exact_expected_gradient(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain, eo);
  EXPECT_GT(relative_difference(gv, gs), 1e-3);
}

TEST(ExactGradient, RejectsUnsupportedKinds) {
  const auto p = testing::random_policy(1, 3);
  EXPECT_THROW(exact_expected_gradient(Estimator::grpo_lite, p, p, EnumerationDomain{0, 2}), DomainError);
  EXPECT_THROW(exact_objective(Estimator::sft, p, p, EnumerationDomain{0, 2}), DomainError);
}

TEST(ExactObjective, IdentityIsZero) {
  const auto p = testing::random_policy(9, 4, StudentFamily::tabular, 2, 1);
  for (Estimator e : {Estimator::vanilla_rkl, Estimator::sg_rkl})
    EXPECT_NEAR(exact_objective(e, p, p, EnumerationDomain{0, 3}), 0.0, 1e-15);
}

TEST(ExactObjective, TokenMeanIsMinusKlOverExpectedLength) {
  const auto inst = random_instance(RngStream(10), 4, 3);
  double mean_len = 0.0;
  for (const auto& w : enumerate_trajectories(inst.domain, inst.student)) mean_len += w.prob * w.traj.length();
  EXPECT_NEAR(exact_objective(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain),
              -exact_rkl(inst.student, inst.teacher, inst.domain) / mean_len, 1e-12);
}

TEST(ExactObjective, IncreasesAsStudentApproachesTeacher) {
  PolicyParams t(StudentFamily::tabular, 1, toy_vocabulary(3), 1), s = t;
  const double lt[] = {2.0, 0.0, 0.0};
  t.set_context_logits(0, kRoot, lt);
  double prev = -1e300;
  for (int i = 0; i <= 50; ++i) {
    const double ls[] = {-3.0 + 5.0 * i / 50.0, 0.0, 0.0};
    s.set_context_logits(0, kRoot, ls);
    const double v = exact_objective(Estimator::sg_rkl, s, t, EnumerationDomain{0, 1});
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_NEAR(prev, 0.0, 1e-15);
}

TEST(ExactObjective, MonteCarloAgrees) {
  const auto inst = random_instance(RngStream(11), 4, 3);
  ExactOptions eo;
  eo.norm = Normalization::per_sequence;
  const double exact = exact_objective(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain, eo);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  const RngStream root(12);
  for (int i = 0; i < n; ++i) {
    const auto s = sample_trajectory(inst.student, 0, 3, root.split(i));
    std::span<const TokenId> toks = s.traj.tokens;
    double x = 0.0;
    for (std::size_t t = 0; t < toks.size(); ++t) x += log_prob(inst.teacher, 0, toks.first(t), toks[t]) - s.logp[t];
    x /= static_cast<double>(toks.size());
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, exact, 3.0 * se);
}

TEST(FdGradient, Quadratic) {
  const auto g = fd_gradient([](std::span<const double> x) { return x[0] * x[0]; }, std::vector<double>{3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  EXPECT_THROW(fd_gradient([](std::span<const double>) { return 0.0; }, std::vector<double>{1.0}, 0.0), DomainError);
}

TEST(RewardDistribution, MatchedPolicyIsOneAtomAtZero) {
  const auto p = testing::random_policy(13, 4, StudentFamily::tabular, 2, 1);
  const auto atoms = exact_reward_distribution(p, p, EnumerationDomain{0, 3});
  ASSERT_EQ(atoms.size(), 1u);
  EXPECT_EQ(atoms[0].value, 0.0);
  double mean_len = 0.0;
  for (const auto& w : enumerate_trajectories(EnumerationDomain{0, 3}, p)) mean_len += w.prob * w.traj.length();
  EXPECT_NEAR(atoms[0].mass, mean_len, 1e-12);
}

TEST(RewardDistribution, AdversarialTeacherHasMassBelowMinusForty) {
  TaskOptions opt;
  opt.modulus = 3;
  opt.chain_length = 2;
  const auto task = build_task(TaskKind::mod_sum_chain, 5, 4, opt);
  ASSERT_LE(task.spec.vocab.size(), 5u);
  TeacherSpec ts;
  ts.mode = TeacherMode::adversarial;
  const auto teacher = build_teacher(task.spec, ts);
  const auto student = uniform_policy(task.spec, StudentFamily::tabular, 2);
  double tail = 0.0;
  for (const auto& a : exact_reward_distribution(student, teacher, EnumerationDomain{0, task.spec.max_len}))
    if (a.value < -40.0) tail += a.mass;
  EXPECT_GT(tail, 0.0);
}

TEST(RewardDistribution, MeanRewardIsMinusSequenceKl) {
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto inst = random_instance(RngStream(400 + i), 4, 3);
    double first_moment = 0.0;
    for (const auto& a : exact_reward_distribution(inst.student, inst.teacher, inst.domain))
      first_moment += a.mass * a.value;
    EXPECT_NEAR(first_moment, -exact_rkl(inst.student, inst.teacher, inst.domain), 1e-12);
  }
}

TEST(VerifySuite, AllChecksPass) {
  const auto checks = run_verification();
  for (const auto& c : checks) EXPECT_TRUE(c.passed) << c.name << " residual " << c.residual;
  EXPECT_EQ(checks.size(), 7u);
}

TEST(VerifySuite, CorruptedGradientIsCaught) {
  VerifyOptions o;
  o.corrupt_grad_log_prob = true;
  const auto c = check_grad_log_prob_fd(o);
  EXPECT_FALSE(c.passed);
  EXPECT_NEAR(c.residual, 1e-3, 1e-6);
}

}  // namespace
}  // namespace reldist
