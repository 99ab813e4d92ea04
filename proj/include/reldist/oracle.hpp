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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/numeric.hpp"
#include "reldist/policy.hpp"
#include "reldist/signal.hpp"
#include "reldist/types.hpp"

namespace reldist {

/// One prompt with a length cap, small enough to enumerate every completion.
struct EnumerationDomain {
  PromptId prompt = 0;
  std::size_t max_len = 1;
};

inline constexpr std::size_t kOracleMaxVocab = 5;
inline constexpr std::size_t kOracleMaxLen = 4;
inline constexpr double kOracleMaxSequences = 1e4;

inline void check_domain(const PolicyParams& params, const EnumerationDomain& d) {
  const std::size_t v = params.vocab_size();
  if (d.max_len < 1) throw DomainError("enumeration domain: max_len must be >= 1");
  if (v > kOracleMaxVocab || d.max_len > kOracleMaxLen)
    throw DomainError("enumeration domain too large: V=" + std::to_string(v) + ", max_len=" + std::to_string(d.max_len));
  double count = 0.0, block = 1.0;
  for (std::size_t l = 1; l <= d.max_len; ++l) count += (block *= static_cast<double>(v));
  if (count > kOracleMaxSequences) throw DomainError("enumeration domain exceeds sequence guard");
  if (d.prompt >= params.num_prompts()) throw DomainError("enumeration domain: unknown prompt");
}

struct WeightedTrajectory {
  Trajectory traj;
  double prob = 0.0;
  std::vector<double> logp;     // per token, under the enumerated policy
  std::vector<double> entropy;  // next-token entropy at each position
};

/// Every completion that ends in eos within max_len or is cut at max_len,
/// with its exact probability. Order is lexicographic by token id.
inline std::vector<WeightedTrajectory> enumerate_trajectories(const EnumerationDomain& d, const PolicyParams& params) {
  check_domain(params, d);
  std::vector<WeightedTrajectory> out;
  const TokenId eos = params.vocab().eos();
  WeightedTrajectory cur;
  cur.traj.prompt = d.prompt;
  std::function<void(double)> walk = [&](double logp_prefix) {
    const auto dist = next_dist(params, d.prompt, cur.traj.tokens);
    for (TokenId tok = 0; tok < params.vocab_size(); ++tok) {
      const double lp = dist.logprobs[tok];
      cur.traj.tokens.push_back(tok);
      cur.logp.push_back(lp);
      cur.entropy.push_back(dist.entropy);
      if (tok == eos || cur.traj.tokens.size() == d.max_len) {
        WeightedTrajectory w = cur;
        w.traj.terminated = tok == eos;
        w.prob = std::exp(logp_prefix + lp);
        out.push_back(std::move(w));
      } else {
        walk(logp_prefix + lp);
      }
      cur.traj.tokens.pop_back();
      cur.logp.pop_back();
      cur.entropy.pop_back();
    }
  };
  walk(0.0);
  return out;
}

/// Sequence-level KL(pi_theta || pi_T) over the domain, in nats.
inline double exact_rkl(const PolicyParams& params, const PolicyParams& teacher, const EnumerationDomain& d) {
  check_domain(teacher, d);
  double kl = 0.0;
  for (const auto& w : enumerate_trajectories(d, params)) {
    if (w.prob == 0.0) continue;
    double ls = 0.0;
    for (double x : w.logp) ls += x;
    kl += w.prob * (ls - sequence_log_prob(teacher, w.traj));
  }
  return kl;
}

/// How per-trajectory token sums are normalised in exact expectations.
///   token_mean:   E[sum_t x_t] / E[|o|]  (limit of dividing a batch by sum |o_i|)
///   per_sequence: E[(1/|o|) sum_t x_t]   (one trajectory per batch)
enum class Normalization { token_mean, per_sequence };

struct ExactOptions {
  Normalization norm = Normalization::token_mean;
  const PolicyParams* behavior = nullptr;       // theta_old; defaults to params
  const PolicyParams* reward_anchor = nullptr;  // sg/reopold: R is frozen at this policy; defaults to behavior
  double lambda = 0.0;                          // reopold clip
  std::optional<double> tau;                    // reopold refinement threshold; exploration mask when unset
};

namespace detail {

struct TokenView {
  const WeightedTrajectory* w = nullptr;
  std::size_t t = 0;
  double logp_teacher = 0.0;
};

/// Visits every (trajectory, position) of the behaviour policy with the
/// trajectory's normalisation weight.
template <typename Fn>
void for_each_weighted_token(const std::vector<WeightedTrajectory>& trajs, const PolicyParams& teacher,
                             Normalization norm, Fn&& fn) {
  double mean_len = 0.0;
  for (const auto& w : trajs) mean_len += w.prob * static_cast<double>(w.traj.length());
  for (const auto& w : trajs) {
    if (w.prob == 0.0) continue;
    const double scale = norm == Normalization::token_mean ? w.prob / mean_len
                                                           : w.prob / static_cast<double>(w.traj.length());
    std::span<const TokenId> toks = w.traj.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t)
      fn(TokenView{&w, t, log_prob(teacher, w.traj.prompt, toks.first(t), toks[t])}, scale);
  }
}

inline void require_distillation_kind(Estimator kind) {
  if (kind != Estimator::vanilla_rkl && kind != Estimator::sg_rkl && kind != Estimator::reopold)
    throw DomainError("exact oracle supports vanilla_rkl, sg_rkl and reopold");
}

}  // namespace detail

/// Exact expectation, under the behaviour policy, of the per-token surrogate
///   vanilla: rho(theta) R(theta)
///   sg:      rho(theta) R(anchor)
///   reopold: rho(theta) max(R(anchor), floor) M   (normalised by the mask mass)
/// so that its derivative at theta = behaviour is the estimator's expected gradient.
inline double exact_objective(Estimator kind, const PolicyParams& params, const PolicyParams& teacher,
                              const EnumerationDomain& d, const ExactOptions& opt = {}) {
  detail::require_distillation_kind(kind);
  check_domain(teacher, d);
  const PolicyParams& behavior = opt.behavior ? *opt.behavior : params;
  const PolicyParams& anchor = opt.reward_anchor ? *opt.reward_anchor : behavior;
  const auto trajs = enumerate_trajectories(d, behavior);
  const double floor = clip_floor(opt.lambda);
  double value = 0.0, mask_mass = 0.0;
  detail::for_each_weighted_token(trajs, teacher, opt.norm, [&](const detail::TokenView& v, double scale) {
    const auto& traj = v.w->traj;
    std::span<const TokenId> toks = traj.tokens;
    const double lp_cur = log_prob(params, traj.prompt, toks.first(v.t), toks[v.t]);
    const double rho = std::exp(lp_cur - v.w->logp[v.t]);
    if (kind == Estimator::vanilla_rkl) {
      value += scale * rho * (v.logp_teacher - lp_cur);
      return;
    }
    const double lp_anchor = &anchor == &behavior ? v.w->logp[v.t]
                                                  : log_prob(anchor, traj.prompt, toks.first(v.t), toks[v.t]);
    const double r = v.logp_teacher - lp_anchor;
    if (kind == Estimator::sg_rkl) {
      value += scale * rho * r;
      return;
    }
    const double m = opt.tau ? refinement_mask(v.w->entropy[v.t], *opt.tau) : exploration_mask(r, opt.lambda);
    mask_mass += scale * m;
    value += scale * rho * std::max(r, floor) * m;
  });
  if (kind == Estimator::reopold) return mask_mass > 0.0 ? value / mask_mass : 0.0;
  return value;
}

/// Expected estimator output at theta_old = params, computed by enumeration.
inline std::vector<double> exact_expected_gradient(Estimator kind, const PolicyParams& params,
                                                   const PolicyParams& teacher, const EnumerationDomain& d,
                                                   const ExactOptions& opt = {}) {
  detail::require_distillation_kind(kind);
  check_domain(teacher, d);
  const auto trajs = enumerate_trajectories(d, params);
  const double floor = clip_floor(opt.lambda);
  std::vector<double> grad(params.size(), 0.0);
  double mask_mass = 0.0;
  detail::for_each_weighted_token(trajs, teacher, opt.norm, [&](const detail::TokenView& v, double scale) {
    const auto& traj = v.w->traj;
    std::span<const TokenId> toks = traj.tokens;
    const double r = v.logp_teacher - v.w->logp[v.t];
    double coeff = 0.0;
    switch (kind) {
      case Estimator::vanilla_rkl: coeff = r - 1.0; break;
      case Estimator::sg_rkl: coeff = r; break;
      default: {
        const double m = opt.tau ? refinement_mask(v.w->entropy[v.t], *opt.tau) : exploration_mask(r, opt.lambda);
        mask_mass += scale * m;
        coeff = std::max(r, floor) * m;
      }
    }
    if (coeff != 0.0) grad_log_prob(params, traj.prompt, toks.first(v.t), toks[v.t]).add_to(grad, scale * coeff);
  });
  if (kind == Estimator::reopold) {
    if (mask_mass > 0.0)
      for (double& g : grad) g /= mask_mass;
    else
      std::fill(grad.begin(), grad.end(), 0.0);
  }
  return grad;
}

/// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double h) {
  if (!(h > 0.0)) throw DomainError("fd_gradient: h must be > 0");
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double x0 = x[j];
    x[j] = x0 + h;
    const double fp = f(x);
    x[j] = x0 - h;
    const double fm = f(x);
    x[j] = x0;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> fd_gradient(const std::function<double(const PolicyParams&)>& f, PolicyParams params,
                                       double h) {
  if (!(h > 0.0)) throw DomainError("fd_gradient: h must be > 0");
  auto x = params.values();
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double x0 = x[j];
    x[j] = x0 + h;
    const double fp = f(params);
    x[j] = x0 - h;
    const double fm = f(params);
    x[j] = x0;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct RewardAtom {
  double value = 0.0;
  double mass = 0.0;
};

/// Distribution of the token reward R = log pi_T - log pi_theta over every
/// (trajectory, position), each weighted by the trajectory probability. Equal
/// values are merged; masses sum to the expected completion length.
inline std::vector<RewardAtom> exact_reward_distribution(const PolicyParams& params, const PolicyParams& teacher,
                                                         const EnumerationDomain& d) {
  check_domain(teacher, d);
  std::map<double, double> atoms;
  for (const auto& w : enumerate_trajectories(d, params)) {
    if (w.prob == 0.0) continue;
    std::span<const TokenId> toks = w.traj.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const double r = log_prob(teacher, w.traj.prompt, toks.first(t), toks[t]) - w.logp[t];
      atoms[r == 0.0 ? 0.0 : r] += w.prob;
    }
  }
  std::vector<RewardAtom> out;
  out.reserve(atoms.size());
  for (const auto& [v, m] : atoms) out.push_back({v, m});
  return out;
}

}  // namespace reldist
