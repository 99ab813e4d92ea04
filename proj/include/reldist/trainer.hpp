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
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/metrics.hpp"
#include "reldist/numeric.hpp"
#include "reldist/oracle.hpp"
#include "reldist/parallel.hpp"
#include "reldist/policy.hpp"
#include "reldist/rng.hpp"
#include "reldist/signal.hpp"
#include "reldist/tasks.hpp"
#include "reldist/text.hpp"
#include "reldist/types.hpp"

namespace reldist {

// ---------------------------------------------------------------------------
// Rollouts

/// Samples G trajectories per prompt from sampler. Records carry the
/// student's log-prob (logp_old), the teacher's log-prob, and the sampler's
/// next-token entropy. Trajectory (slot, g) uses stream rng.split({slot, g}).
inline RolloutBatch generate_rollouts(const PolicyParams& sampler, const PolicyParams& student,
                                      const PolicyParams& teacher, std::span<const PromptId> prompts,
                                      std::size_t group_size, std::size_t max_len, const RngStream& rng,
                                      std::size_t workers = 1) {
  RolloutBatch batch;
  batch.prompts.assign(prompts.begin(), prompts.end());
  batch.group_size = group_size;
  batch.rollouts.resize(prompts.size() * group_size);
  const bool on_policy = &sampler == &student;
  parallel_for(batch.rollouts.size(), workers, [&](std::size_t idx) {
    const std::size_t slot = idx / group_size, g = idx % group_size;
    auto s = sample_trajectory(sampler, prompts[slot], max_len, rng.split({slot, g}));
    Rollout& ro = batch.rollouts[idx];
    ro.slot = slot;
    ro.group_index = g;
    ro.records.resize(s.traj.length());
    std::span<const TokenId> toks = s.traj.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      TokenRecord& r = ro.records[t];
      r.logp_old = on_policy ? s.logp[t] : log_prob(student, prompts[slot], toks.first(t), toks[t]);
      r.logp_cur = r.logp_old;
      r.logp_teacher = log_prob(teacher, prompts[slot], toks.first(t), toks[t]);
      r.entropy = s.entropy[t];
      r.reward_raw = r.logp_teacher - r.logp_cur;
      r.reward_clipped = r.reward_raw;
      r.ratio = 1.0;
      r.mask = 1;
    }
    ro.traj = std::move(s.traj);
  });
  return batch;
}

/// Recomputes logp_cur, ratio and (unless frozen) the raw and clipped
/// rewards against the current parameters. Masks are left untouched.
inline void refresh_records(RolloutBatch& batch, const PolicyParams& params, double lambda, bool freeze_reward = false) {
  const double floor = clip_floor(lambda);
  for (auto& ro : batch.rollouts) {
    std::span<const TokenId> toks = ro.traj.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      TokenRecord& r = ro.records[t];
      r.logp_cur = log_prob(params, ro.traj.prompt, toks.first(t), toks[t]);
      r.ratio = std::exp(r.logp_cur - r.logp_old);
      if (!freeze_reward) r.reward_raw = r.logp_teacher - r.logp_cur;
      r.reward_clipped = std::max(r.reward_raw, floor);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient estimators

struct GradientEstimate {
  std::vector<double> grad;
  double token_count = 0.0;  // normaliser: sum of |o_i| or sum of M
  double objective = 0.0;
  std::size_t ratio_clipped = 0;
};

struct EstimatorOptions {
  Scope norm_scope = Scope::batch;
  std::optional<double> ppo_ratio_clip;
  bool grpo_std_norm = false;
};

namespace detail {

/// Per-token terms of an estimator. The gradient contribution of a token is
///   (rho * ratio_coeff  [dropped when rho is clipped]  + rho_eff * direct_coeff) * grad log pi
/// and the objective contribution is rho_eff * ratio_coeff.
struct TokenTerms {
  double ratio_coeff = 0.0;
  double direct_coeff = 0.0;
  double weight = 1.0;  // contribution to the normaliser
};

template <typename TermFn>
GradientEstimate accumulate(const RolloutBatch& batch, const PolicyParams& params, const EstimatorOptions& opt,
                            TermFn&& term) {
  GradientEstimate est;
  est.grad.assign(params.size(), 0.0);
  std::vector<double> group_grad;
  double total_weight = 0.0;
  std::size_t nonempty_groups = 0;

  auto token_pass = [&](const Rollout& ro, std::size_t t, std::span<double> into, double& obj, double& weight) {
    const TokenRecord& r = ro.records[t];
    const TokenTerms tt = term(ro, t, r);
    weight += tt.weight;
    if (tt.ratio_coeff == 0.0 && tt.direct_coeff == 0.0) return;
    double rho = r.ratio, rho_eff = r.ratio;
    bool clipped = false;
    if (opt.ppo_ratio_clip) {
      const double eps = *opt.ppo_ratio_clip;
      rho_eff = std::clamp(rho, 1.0 - eps, 1.0 + eps);
      clipped = rho_eff != rho;
      if (clipped) ++est.ratio_clipped;
    }
    const double coeff = (clipped ? 0.0 : rho * tt.ratio_coeff) + rho_eff * tt.direct_coeff;
    obj += rho_eff * tt.ratio_coeff;
    if (coeff == 0.0) return;
    std::span<const TokenId> toks = ro.traj.tokens;
    grad_log_prob(params, ro.traj.prompt, toks.first(t), toks[t]).add_to(into, coeff);
  };

  if (opt.norm_scope == Scope::batch) {
    double obj = 0.0;
    for (const auto& ro : batch.rollouts)
      for (std::size_t t = 0; t < ro.records.size(); ++t) token_pass(ro, t, est.grad, obj, total_weight);
    est.token_count = total_weight;
    if (total_weight > 0.0) {
      for (double& g : est.grad) g /= total_weight;
      est.objective = obj / total_weight;
    } else {
      std::fill(est.grad.begin(), est.grad.end(), 0.0);
    }
    return est;
  }

  group_grad.assign(params.size(), 0.0);
  double obj_sum = 0.0;
  for (std::size_t slot = 0; slot < batch.prompts.size(); ++slot) {
    std::fill(group_grad.begin(), group_grad.end(), 0.0);
    double obj = 0.0, weight = 0.0;
    for (const auto& ro : batch.group(slot))
      for (std::size_t t = 0; t < ro.records.size(); ++t) token_pass(ro, t, group_grad, obj, weight);
    total_weight += weight;
    if (weight <= 0.0) continue;
    ++nonempty_groups;
    for (std::size_t i = 0; i < group_grad.size(); ++i) est.grad[i] += group_grad[i] / weight;
    obj_sum += obj / weight;
  }
  est.token_count = total_weight;
  if (nonempty_groups > 0) {
    const double b = static_cast<double>(nonempty_groups);
    for (double& g : est.grad) g /= b;
    est.objective = obj_sum / b;
  }
  return est;
}

}  // namespace detail

/// Total derivative of rho * R: rho * (R - 1) * grad log pi per token, over sum |o_i|.
inline GradientEstimate grad_vanilla_rkl(const RolloutBatch& batch, const PolicyParams& params,
                                         const EstimatorOptions& opt = {}) {
  if (batch.rollouts.empty()) throw DomainError("grad_vanilla_rkl: empty batch");
  return detail::accumulate(batch, params, opt, [](const Rollout&, std::size_t, const TokenRecord& r) {
    return detail::TokenTerms{r.reward_raw, -1.0, 1.0};
  });
}

/// Stop-gradient reward: rho * R * grad log pi per token, over sum |o_i|.
inline GradientEstimate grad_sg_rkl(const RolloutBatch& batch, const PolicyParams& params,
                                    const EstimatorOptions& opt = {}) {
  if (batch.rollouts.empty()) throw DomainError("grad_sg_rkl: empty batch");
  return detail::accumulate(batch, params, opt, [](const Rollout&, std::size_t, const TokenRecord& r) {
    return detail::TokenTerms{r.reward_raw, 0.0, 1.0};
  });
}

/// Unified relaxed objective: rho * clipped R * M per token, over sum M.
/// Requires apply_masks() for the current step. A batch with sum M == 0
/// yields a zero gradient and token_count 0.
inline GradientEstimate grad_reopold(const RolloutBatch& batch, const PolicyParams& params,
                                     const EstimatorOptions& opt = {}) {
  return detail::accumulate(batch, params, opt, [](const Rollout&, std::size_t, const TokenRecord& r) {
    const double m = r.mask ? 1.0 : 0.0;
    return detail::TokenTerms{r.reward_clipped * m, 0.0, m};
  });
}

/// Mean-centred binary verifier rewards per group (optionally divided by the group std).
inline std::vector<double> group_advantages(const RolloutBatch& batch, const Verifier& verify, bool std_norm = false) {
  std::vector<double> adv(batch.rollouts.size(), 0.0);
  for (std::size_t slot = 0; slot < batch.prompts.size(); ++slot) {
    const std::size_t base = slot * batch.group_size;
    double mean = 0.0;
    for (std::size_t g = 0; g < batch.group_size; ++g) {
      adv[base + g] = verify(batch.rollouts[base + g].traj) ? 1.0 : 0.0;
      mean += adv[base + g];
    }
    mean /= static_cast<double>(batch.group_size);
    double var = 0.0;
    for (std::size_t g = 0; g < batch.group_size; ++g) {
      adv[base + g] -= mean;
      var += adv[base + g] * adv[base + g];
    }
    if (std_norm) {
      const double sd = std::sqrt(var / static_cast<double>(batch.group_size));
      for (std::size_t g = 0; g < batch.group_size; ++g) adv[base + g] = sd > 0.0 ? adv[base + g] / sd : 0.0;
    }
  }
  return adv;
}

/// Verifier-reward policy gradient: rho * A_i * grad log pi, over sum |o_i|.
inline GradientEstimate grad_grpo_lite(const RolloutBatch& batch, const PolicyParams& params, const Verifier& verify,
                                       const EstimatorOptions& opt = {}) {
  const auto adv = group_advantages(batch, verify, opt.grpo_std_norm);
  const Rollout* first = batch.rollouts.data();
  return detail::accumulate(batch, params, opt, [&](const Rollout& ro, std::size_t, const TokenRecord&) {
    return detail::TokenTerms{adv[static_cast<std::size_t>(&ro - first)], 0.0, 1.0};
  });
}

/// Maximum likelihood on teacher samples: grad log pi per token, over sum |o_i|.
inline GradientEstimate grad_sft(const RolloutBatch& teacher_batch, const PolicyParams& params) {
  GradientEstimate est;
  est.grad.assign(params.size(), 0.0);
  double n = 0.0, obj = 0.0;
  for (const auto& ro : teacher_batch.rollouts) {
    std::span<const TokenId> toks = ro.traj.tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      grad_log_prob(params, ro.traj.prompt, toks.first(t), toks[t]).add_to(est.grad, 1.0);
      obj += ro.records.empty() ? 0.0 : ro.records[t].logp_cur;
      n += 1.0;
    }
  }
  est.token_count = n;
  if (n > 0.0) {
    for (double& g : est.grad) g /= n;
    est.objective = obj / n;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Optimiser

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 0;
  std::vector<double> first;   // velocity (momentum) or first moment (adam)
  std::vector<double> second;  // adam only

  bool operator==(const OptimizerState&) const = default;
};

inline OptimizerState optimizer_of(const RunConfig& cfg) {
  OptimizerState s;
  s.kind = cfg.optimizer;
  s.momentum = cfg.momentum;
  s.beta1 = cfg.adam_beta1;
  s.beta2 = cfg.adam_beta2;
  s.eps = cfg.adam_eps;
  return s;
}

/// Gradient ascent step: params += lr * direction(grad).
inline void apply_update(OptimizerState& state, std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size()) throw DomainError("apply_update: shape mismatch");
  if (!all_finite(grad)) throw DomainError("apply_update: non-finite gradient");
  ++state.steps;
  switch (state.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr * grad[i];
      return;
    case OptimizerKind::momentum:
      state.first.resize(params.size(), 0.0);
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.first[i] = state.momentum * state.first[i] + grad[i];
        params[i] += lr * state.first[i];
      }
      return;
    case OptimizerKind::adam: {
      state.first.resize(params.size(), 0.0);
      state.second.resize(params.size(), 0.0);
      const double t = static_cast<double>(state.steps);
      const double c1 = 1.0 - std::pow(state.beta1, t), c2 = 1.0 - std::pow(state.beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * grad[i];
        state.second[i] = state.beta2 * state.second[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        params[i] += lr * (state.first[i] / c1) / (std::sqrt(state.second[i] / c2) + state.eps);
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Experiment setup

/// Largest vocabulary / length for which per-prompt exact enumeration is run.
inline constexpr std::size_t kEnumerableVocab = 5;
inline constexpr std::size_t kEnumerableLength = 4;

struct Experiment {
  RunConfig cfg;
  Task task;
  PolicyParams sft_teacher;  // near-optimal; source of warm-start data
  PolicyParams teacher;      // distillation target
  PolicyParams student;      // after warm start
  std::optional<EvalMetrics> warm_start_eval;
};

/// Uniformly chosen batch_prompts distinct prompts for one step.
inline std::vector<PromptId> sample_prompts(std::size_t task_size, std::size_t count, RngStream rng) {
  std::vector<PromptId> ids(task_size);
  std::iota(ids.begin(), ids.end(), PromptId{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[i + rng.below(task_size - i)]);
  ids.resize(count);
  return ids;
}

/// Runs steps of maximum likelihood on samples from teacher.
inline void warm_start(PolicyParams& student, const PolicyParams& teacher, const TaskSpec& task, const RunConfig& cfg) {
  OptimizerState opt = optimizer_of(cfg);
  opt.kind = cfg.warm_start_optimizer;
  const RngStream root = RngStream(cfg.seed).split(tag_of("warm_start"));
  for (std::size_t k = 1; k <= cfg.warm_start_steps; ++k) {
    const auto prompts = sample_prompts(task.size(), cfg.batch_prompts, root.split({tag_of("batch"), k}));
    const auto batch = generate_rollouts(teacher, student, teacher, prompts, cfg.group_size, task.max_len,
                                         root.split({tag_of("rollout"), k}), cfg.workers);
    const auto est = grad_sft(batch, student);
    apply_update(opt, student.values(), est.grad, cfg.warm_start_lr);
  }
}

inline Experiment prepare_experiment(const RunConfig& raw) {
  Experiment ex{validate_config(raw), {}, {}, {}, {}, std::nullopt};
  const RunConfig& cfg = ex.cfg;
  ex.task = build_task(cfg);
  TeacherSpec ts = teacher_spec_of(cfg);
  TeacherSpec near = ts;
  near.mode = TeacherMode::near_optimal;
  ex.sft_teacher = build_teacher(ex.task.spec, near);
  ex.student = uniform_policy(ex.task.spec, cfg.student_family, cfg.student_order);
  warm_start(ex.student, ex.sft_teacher, ex.task.spec, cfg);
  if (ts.mode == TeacherMode::matched_perturbed) ts.base = ex.student;
  ex.teacher = ts.mode == TeacherMode::near_optimal ? ex.sft_teacher : build_teacher(ex.task.spec, ts);
  return ex;
}

// ---------------------------------------------------------------------------
// Training loop

/// Seed of every in-training evaluation; standalone evaluation reuses it so a
/// final checkpoint scores exactly as the last logged step.
inline std::uint64_t eval_seed_of(const RunConfig& cfg) { return cfg.seed ^ 0xE7A1ULL; }

struct TrainHooks {
  /// Called after each completed step (and with step 0 before the first).
  std::function<void(std::size_t step, const PolicyParams&, const OptimizerState&)> on_checkpoint;
  /// Receives the batch of each step at which a trace is due.
  std::function<void(std::size_t step, const RolloutBatch&)> on_trace;
};

struct ResumeState {
  std::size_t step = 0;  // last completed step
  PolicyParams params;
  OptimizerState optimizer;
};

struct TrainResult {
  PolicyParams params;
  OptimizerState optimizer;
  RunLog log;
};

/// Exact sequence-level reverse KL averaged over prompts (small domains only).
inline double mean_exact_rkl(const PolicyParams& student, const PolicyParams& teacher, const TaskSpec& task) {
  double acc = 0.0;
  for (const auto& p : task.prompts) acc += exact_rkl(student, teacher, EnumerationDomain{p.id, task.max_len});
  return acc / static_cast<double>(task.size());
}

inline std::string dump_batch(const RolloutBatch& batch, std::size_t step) {
  std::ostringstream out;
  for (const auto& ro : batch.rollouts)
    for (std::size_t t = 0; t < ro.records.size(); ++t) {
      const auto& r = ro.records[t];
      out << "{\"step\":" << step << ",\"slot\":" << ro.slot << ",\"group\":" << ro.group_index
          << ",\"prompt\":" << ro.traj.prompt << ",\"position\":" << t << ",\"token\":" << ro.traj.tokens[t]
          << ",\"logp_old\":" << format_double(r.logp_old) << ",\"logp_cur\":" << format_double(r.logp_cur)
          << ",\"logp_teacher\":" << format_double(r.logp_teacher) << ",\"ratio\":" << format_double(r.ratio)
          << ",\"reward\":" << format_double(r.reward_raw) << ",\"mask\":" << int(r.mask) << "}\n";
    }
  return out.str();
}

/// Runs the exploration-to-refinement loop (or a baseline estimator) on a
/// prepared experiment. Each step samples under the parameters at the start
/// of the step, applies micro_updates gradient steps, and then adopts the
/// result as the new sampling policy.
inline TrainResult train(const Experiment& ex, const TrainHooks& hooks = {}, const ResumeState* resume = nullptr) {
  const RunConfig& cfg = ex.cfg;
  const TaskSpec& task = ex.task.spec;
  TrainResult res{resume ? resume->params : ex.student, resume ? resume->optimizer : optimizer_of(cfg), {}};
  PolicyParams& params = res.params;
  const std::size_t first_step = resume ? resume->step + 1 : 1;
  const MaskSchedule schedule = mask_schedule_of(cfg);
  const EstimatorOptions est_opt{cfg.norm_scope, cfg.ppo_ratio_clip, cfg.grpo_std_norm};
  const RngStream root(cfg.seed);
  const bool enumerable = task.vocab.size() <= kEnumerableVocab && task.max_len <= kEnumerableLength;
  const std::uint64_t eval_seed = eval_seed_of(cfg);

  if (!resume && cfg.eval_every > 0) res.log.initial_eval = evaluate(params, ex.task, cfg.eval_k, eval_seed, cfg.eval_temperature, cfg.workers);
  if (!resume && hooks.on_checkpoint) hooks.on_checkpoint(0, params, res.optimizer);

  for (std::size_t k = first_step; k <= cfg.total_steps; ++k) {
    const PolicyParams old = params;
    const auto prompts = sample_prompts(task.size(), cfg.batch_prompts, root.split({tag_of("batch"), k}));
    const PolicyParams& sampler = cfg.estimator == Estimator::sft ? ex.teacher : old;
    RolloutBatch batch = generate_rollouts(sampler, old, ex.teacher, prompts, cfg.group_size, task.max_len,
                                           root.split({tag_of("rollout"), k}), cfg.workers);
    bool finite = true;
    batch.for_each_record([&](const TokenRecord& r) {
      finite = finite && std::isfinite(r.logp_old) && std::isfinite(r.logp_teacher) && std::isfinite(r.entropy);
    });
    if (!finite) throw NonFiniteError("non-finite rollout log-probabilities at step " + std::to_string(k), dump_batch(batch, k));

    MaskSchedule sched = schedule;
    if (cfg.estimator != Estimator::reopold) sched.switch_step = cfg.total_steps + 1;  // diagnostics only
    const MaskSummary masks = apply_masks(batch, k, sched);
    if (cfg.estimator != Estimator::reopold) batch.for_each_record([](TokenRecord& r) { r.mask = 1; });

    StepRecord rec;
    rec.step = k;
    rec.phase = schedule.phase_at(k);
    rec.token_count = masks.total;
    rec.kept_tokens = cfg.estimator == Estimator::reopold ? masks.kept : masks.total;
    rec.mask_fraction = masks.total ? static_cast<double>(rec.kept_tokens) / static_cast<double>(masks.total) : 0.0;
    rec.clipped_fraction = masks.clipped_fraction();
    if (cfg.estimator == Estimator::reopold && rec.phase == Phase::refinement && cfg.mask_scope == Scope::batch)
      rec.tau = masks.tau;
    double h = 0.0;
    batch.for_each_record([&](const TokenRecord& r) { h += r.entropy; });
    rec.mean_entropy = masks.total ? h / static_cast<double>(masks.total) : 0.0;

    if (hooks.on_trace && cfg.trace_every > 0 && k % cfg.trace_every == 0) hooks.on_trace(k, batch);

    double norm_sum = 0.0;
    std::size_t ratio_clipped = 0, ratio_tokens = 0, applied = 0;
    for (std::size_t u = 0; u < cfg.micro_updates; ++u) {
      if (u > 0) refresh_records(batch, params, cfg.lambda(), cfg.freeze_reward);
      GradientEstimate est;
      switch (cfg.estimator) {
        case Estimator::vanilla_rkl: est = grad_vanilla_rkl(batch, params, est_opt); break;
        case Estimator::sg_rkl: est = grad_sg_rkl(batch, params, est_opt); break;
        case Estimator::reopold: est = grad_reopold(batch, params, est_opt); break;
        case Estimator::grpo_lite: est = grad_grpo_lite(batch, params, ex.task.verifier, est_opt); break;
        case Estimator::sft: est = grad_sft(batch, params); break;
      }
      if (u == 0) rec.objective = est.objective;
      ratio_clipped += est.ratio_clipped;
      ratio_tokens += masks.total;
      if (!all_finite(est.grad) || !std::isfinite(est.objective)) {
        throw NonFiniteError("non-finite gradient at step " + std::to_string(k) + ", micro-update " + std::to_string(u),
                             dump_batch(batch, k));
      }
      if (est.token_count <= 0.0) continue;  // nothing selected: leave params untouched
      norm_sum += l2_norm(est.grad);
      ++applied;
      apply_update(res.optimizer, params.values(), est.grad, cfg.learning_rate);
      if (!all_finite(params.values()))
        throw NonFiniteError("non-finite parameters after step " + std::to_string(k) + ", micro-update " + std::to_string(u),
                             dump_batch(batch, k));
    }
    rec.skipped = applied == 0;
    rec.grad_norm = applied ? norm_sum / static_cast<double>(applied) : 0.0;
    rec.ratio_clipped_fraction = ratio_tokens ? static_cast<double>(ratio_clipped) / static_cast<double>(ratio_tokens) : 0.0;

    if (enumerable) rec.exact_rkl = mean_exact_rkl(params, ex.teacher, task);
    if (cfg.eval_every > 0 && (k % cfg.eval_every == 0 || k == cfg.total_steps))
      rec.eval = evaluate(params, ex.task, cfg.eval_k, eval_seed, cfg.eval_temperature, cfg.workers);
    res.log.append(std::move(rec));
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (k % cfg.checkpoint_every == 0 || k == cfg.total_steps))
      hooks.on_checkpoint(k, params, res.optimizer);
  }
  return res;
}

inline TrainResult train(const RunConfig& cfg, const TrainHooks& hooks = {}) {
  return train(prepare_experiment(cfg), hooks);
}

}  // namespace reldist
