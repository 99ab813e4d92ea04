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
#include <string>
#include <vector>

#include "reldist/numeric.hpp"
#include "reldist/oracle.hpp"
#include "reldist/policy.hpp"
#include "reldist/rng.hpp"
#include "reldist/signal.hpp"
#include "reldist/text.hpp"
#include "reldist/types.hpp"

namespace reldist {

/// Letters a, b, ... followed by <bos> and <eos>; size is v.
inline Vocabulary toy_vocabulary(std::size_t v) {
  if (v < 3) throw DomainError("toy vocabulary needs at least three tokens");
  std::vector<std::string> toks;
  for (std::size_t i = 0; i + 2 < v; ++i) toks.emplace_back(1, static_cast<char>('a' + i));
  toks.emplace_back("<bos>");
  toks.emplace_back("<eos>");
  return Vocabulary(std::move(toks), static_cast<TokenId>(v - 2), static_cast<TokenId>(v - 1));
}

inline void fill_normal(PolicyParams& p, RngStream& rng, double scale) {
  for (double& x : p.values()) x = scale * rng.normal();
}

/// A random single-prompt student/teacher pair over an enumerable domain.
struct OracleInstance {
  PolicyParams student;
  PolicyParams teacher;
  EnumerationDomain domain;
};

inline OracleInstance random_instance(RngStream rng, std::size_t v, std::size_t max_len,
                                      StudentFamily family = StudentFamily::tabular, double scale = 1.5) {
  const auto vocab = toy_vocabulary(v);
  OracleInstance inst{PolicyParams(family, 2, vocab, 1), PolicyParams(StudentFamily::tabular, 2, vocab, 1),
                      EnumerationDomain{0, max_len}};
  fill_normal(inst.student, rng, scale);
  fill_normal(inst.teacher, rng, scale);
  return inst;
}

struct CheckResult {
  std::string name;
  double residual = 0.0;   // worst observed value of the checked quantity
  double tolerance = 0.0;  // pass iff residual <= tolerance
  std::size_t cases = 0;
  bool passed = false;
};

struct VerifyOptions {
  std::uint64_t seed = 2026;
  std::size_t instances = 20;
  std::size_t grad_triples = 100;
  std::size_t bound_triples = 10000;
  std::size_t mask_batches = 100;
  std::size_t kl_pairs = 100;
  /// Test hook: perturbs the analytic grad_log_prob seen by the fd check.
  bool corrupt_grad_log_prob = false;
};

namespace detail {

inline CheckResult finish(std::string name, double residual, double tol, std::size_t cases) {
  return CheckResult{std::move(name), residual, tol, cases, residual <= tol};
}

inline std::size_t random_between(RngStream& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

}  // namespace detail

/// Max relative gap between the exact expected vanilla and sg gradients.
inline CheckResult check_gradient_equivalence(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("equivalence"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.instances; ++i) {
    RngStream rng = root.split(i);
    const auto inst = random_instance(rng.split(1), detail::random_between(rng, 3, 4), detail::random_between(rng, 2, 3));
    const auto gv = exact_expected_gradient(Estimator::vanilla_rkl, inst.student, inst.teacher, inst.domain);
    const auto gs = exact_expected_gradient(Estimator::sg_rkl, inst.student, inst.teacher, inst.domain);
    worst = std::max(worst, relative_difference(gv, gs));
  }
  return detail::finish("vanilla_equals_sg", worst, 1e-8, o.instances);
}

/// exact_expected_gradient(sg) against central differences of exact_objective(sg).
inline CheckResult check_objective_fd(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("objective_fd"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.instances; ++i) {
    RngStream rng = root.split(i);
    const auto inst = random_instance(rng.split(1), detail::random_between(rng, 3, 4), detail::random_between(rng, 2, 3));
    const PolicyParams& theta0 = inst.student;
    ExactOptions eo;
    eo.behavior = eo.reward_anchor = &theta0;
    const auto fd = fd_gradient(
        [&](const PolicyParams& p) { return exact_objective(Estimator::sg_rkl, p, inst.teacher, inst.domain, eo); },
        theta0, 1e-5);
    const auto g = exact_expected_gradient(Estimator::sg_rkl, theta0, inst.teacher, inst.domain);
    worst = std::max(worst, max_abs_difference(fd, g));
  }
  return detail::finish("fd_exact_objective_sg", worst, 1e-5, o.instances);
}

/// grad_log_prob against central differences of log_prob.
inline CheckResult check_grad_log_prob_fd(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("grad_log_prob_fd"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.grad_triples; ++i) {
    RngStream rng = root.split(i);
    const std::size_t v = detail::random_between(rng, 3, 5);
    const auto family = rng.below(2) ? StudentFamily::ngram_bias : StudentFamily::tabular;
    PolicyParams p(family, 2, toy_vocabulary(v), 2);
    fill_normal(p, rng, 1.0);
    const auto prompt = static_cast<PromptId>(rng.below(2));
    std::vector<TokenId> prefix(rng.below(4));
    for (auto& t : prefix) t = static_cast<TokenId>(rng.below(v));
    const auto token = static_cast<TokenId>(rng.below(v));
    auto g = grad_log_prob(p, prompt, prefix, token).to_dense(p.size());
    if (o.corrupt_grad_log_prob) g[p.context_row(prompt, prefix) * v + token] += 1e-3;
    const auto fd = fd_gradient([&](const PolicyParams& q) { return log_prob(q, prompt, prefix, token); }, p, 1e-5);
    worst = std::max(worst, max_abs_difference(fd, g));
  }
  return detail::finish("fd_grad_log_prob", worst, 1e-6, o.grad_triples);
}

/// R <= mixture_bound and mixture_bound >= floor on random triples, plus the
/// lambda = 0.3 asymptote. Residual is the largest relative violation (0 when none).
inline CheckResult check_bound_chain(const VerifyOptions& o) {
  RngStream rng = RngStream(o.seed).split(tag_of("bound_chain"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.bound_triples; ++i) {
    const double lt = -60.0 * rng.uniform(), ls = -60.0 * rng.uniform();
    double lambda = rng.uniform();
    if (lambda == 0.0) lambda = 0.5;
    const double r = lt - ls, b = mixture_bound(lt, ls, lambda), f = clip_floor(lambda);
    const double scale = std::max({1.0, std::abs(r), std::abs(f)});  // rounding grows with magnitude
    worst = std::max({worst, (r - b) / scale, (f - b) / scale});
  }
  // -1.71996 is log(0.3)/0.7 printed to five decimals; compare with the closed
  // form and require the printed rounding to agree.
  const double b03 = mixture_bound(-50.0, 0.0, 0.3);
  double anchor = std::abs(b03 - std::log(0.3) / 0.7);
  if (std::round(b03 * 1e5) / 1e5 != -1.71996) anchor = std::max(anchor, 1.0);
  CheckResult res = detail::finish("bound_chain", worst, 1e-12, o.bound_triples);
  res.passed = res.passed && anchor <= 1e-6;
  res.residual = std::max(worst, anchor > 1e-6 ? anchor : 0.0);
  return res;
}

/// Random batch with distinct entropies and spread rewards.
inline RolloutBatch random_mask_batch(RngStream rng, std::size_t prompts, std::size_t group) {
  RolloutBatch b;
  b.group_size = group;
  for (std::size_t s = 0; s < prompts; ++s) b.prompts.push_back(static_cast<PromptId>(s));
  for (std::size_t s = 0; s < prompts; ++s)
    for (std::size_t g = 0; g < group; ++g) {
      Rollout ro;
      ro.slot = s;
      ro.group_index = g;
      ro.traj.prompt = static_cast<PromptId>(s);
      const std::size_t len = 1 + rng.below(6);
      for (std::size_t t = 0; t < len; ++t) {
        ro.traj.tokens.push_back(0);
        TokenRecord r;
        r.entropy = 2.0 * rng.uniform();
        r.reward_raw = -8.0 * rng.uniform() + 1.0;
        ro.records.push_back(r);
      }
      b.rollouts.push_back(std::move(ro));
    }
  return b;
}

/// Phase-II kept count is ceil(beta N); phase-I masked set is {R < floor}.
/// Residual counts mismatching batches.
inline CheckResult check_mask_counting(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("mask_counting"));
  std::size_t bad = 0;
  for (std::size_t i = 0; i < o.mask_batches; ++i) {
    RngStream rng = root.split(i);
    RolloutBatch batch = random_mask_batch(rng.split(1), 1 + rng.below(4), 1 + rng.below(8));
    const double beta = std::max(0.01, rng.uniform()), lambda = 0.05 + 0.9 * rng.uniform();
    const std::size_t n = batch.token_count();
    MaskSchedule sched{1, lambda, beta, Scope::batch};
    const auto s2 = apply_masks(batch, 1, sched);
    if (s2.kept != static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n) - 1e-9))) ++bad;
    const auto s1 = apply_masks(batch, 0, sched);
    bool same = s1.kept + s1.below_floor == n;
    batch.for_each_record([&](const TokenRecord& r) { same = same && ((r.mask == 0) == (r.reward_raw < clip_floor(lambda))); });
    if (!same) ++bad;
  }
  return detail::finish("mask_counting", static_cast<double>(bad), 0.0, o.mask_batches);
}

/// Enumerated probabilities sum to one.
inline CheckResult check_probability_closure(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("closure"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.instances; ++i) {
    RngStream rng = root.split(i);
    const auto inst = random_instance(rng.split(1), detail::random_between(rng, 3, 5), detail::random_between(rng, 1, 4),
                                      StudentFamily::ngram_bias, 3.0);
    double mass = 0.0;
    for (const auto& w : enumerate_trajectories(inst.domain, inst.student)) mass += w.prob;
    worst = std::max(worst, std::abs(mass - 1.0));
  }
  return detail::finish("probability_closure", worst, 1e-12, o.instances);
}

/// exact_rkl >= 0; residual is the most negative value seen, negated.
inline CheckResult check_kl_nonnegative(const VerifyOptions& o) {
  const RngStream root = RngStream(o.seed).split(tag_of("kl"));
  double worst = 0.0;
  for (std::size_t i = 0; i < o.kl_pairs; ++i) {
    RngStream rng = root.split(i);
    const auto inst = random_instance(rng.split(1), detail::random_between(rng, 3, 5), detail::random_between(rng, 1, 3));
    worst = std::max(worst, -exact_rkl(inst.student, inst.teacher, inst.domain));
  }
  return detail::finish("kl_nonnegative", worst, 0.0, o.kl_pairs);
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& o = {}) {
  return {check_probability_closure(o), check_gradient_equivalence(o), check_objective_fd(o),
          check_grad_log_prob_fd(o),    check_bound_chain(o),          check_mask_counting(o),
          check_kl_nonnegative(o)};
}

inline bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

inline std::string verification_report(const std::vector<CheckResult>& checks) {
  std::string out;
  for (const auto& c : checks)
    out += std::string(c.passed ? "PASS " : "FAIL ") + c.name + " residual=" + format_double(c.residual) +
           " tolerance=" + format_double(c.tolerance) + " cases=" + std::to_string(c.cases) + "\n";
  out += all_passed(checks) ? "overall PASS\n" : "overall FAIL\n";
  return out;
}

}  // namespace reldist
