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
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/policy.hpp"
#include "reldist/rng.hpp"
#include "reldist/types.hpp"

namespace reldist {

struct Prompt {
  PromptId id = 0;
  std::vector<std::size_t> payload;  // mod_sum_chain: operands; copy_reverse: symbol indices
  std::size_t modulus = 0;           // mod_sum_chain only
  std::vector<TokenId> target;       // correct completion, without the trailing eos

  bool operator==(const Prompt&) const = default;
};

struct TaskSpec {
  TaskKind kind = TaskKind::mod_sum_chain;
  Vocabulary vocab;
  std::vector<Prompt> prompts;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return prompts.size(); }
};

/// Exact-match verifier: a trajectory is correct iff it is the target
/// completion followed by eos.
class Verifier {
 public:
  Verifier() = default;
  explicit Verifier(const TaskSpec& task) : eos_(task.vocab.eos()) {
    for (const auto& p : task.prompts) targets_.push_back(p.target);
  }

  bool operator()(const Trajectory& traj) const {
    if (traj.prompt >= targets_.size() || !traj.terminated) return false;
    const auto& target = targets_[traj.prompt];
    if (traj.tokens.size() != target.size() + 1) return false;
    return std::equal(target.begin(), target.end(), traj.tokens.begin()) && traj.tokens.back() == eos_;
  }

  /// Final answer of a terminated trajectory (everything before eos).
  std::optional<std::vector<TokenId>> answer_of(const Trajectory& traj) const {
    if (!traj.terminated || traj.tokens.empty()) return std::nullopt;
    return std::vector<TokenId>(traj.tokens.begin(), traj.tokens.end() - 1);
  }

  const std::vector<TokenId>& target(PromptId prompt) const { return targets_.at(prompt); }

 private:
  std::vector<std::vector<TokenId>> targets_;
  TokenId eos_ = 0;
};

struct Task {
  TaskSpec spec;
  Verifier verifier;
};

struct TaskOptions {
  std::size_t chain_length = 3;
  std::size_t modulus = 5;
  std::size_t payload_length = 3;
  std::size_t alphabet_size = 3;
  std::size_t max_len = 0;  // 0: target length + 2
};

inline Vocabulary mod_sum_vocabulary(std::size_t modulus) {
  std::vector<std::string> toks;
  for (std::size_t d = 0; d < modulus; ++d) toks.push_back(std::to_string(d));
  toks.emplace_back("<bos>");
  toks.emplace_back("<eos>");
  return Vocabulary(std::move(toks), static_cast<TokenId>(modulus), static_cast<TokenId>(modulus + 1));
}

inline Vocabulary copy_reverse_vocabulary(std::size_t alphabet) {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < alphabet; ++i) toks.emplace_back(1, static_cast<char>('a' + i));
  toks.emplace_back("<bos>");
  toks.emplace_back("<eos>");
  return Vocabulary(std::move(toks), static_cast<TokenId>(alphabet), static_cast<TokenId>(alphabet + 1));
}

/// Running sums (a1, a1+a2, ...) mod m, as digit tokens.
inline Prompt make_mod_sum_prompt(PromptId id, std::vector<std::size_t> operands, std::size_t modulus) {
  if (modulus < 2 || modulus > 10) throw ConfigError("modulus must be in [2,10]");
  if (operands.empty()) throw ConfigError("mod_sum_chain needs at least one operand");
  Prompt p;
  p.id = id;
  p.modulus = modulus;
  std::size_t s = 0;
  for (auto a : operands) {
    s = (s + a) % modulus;
    p.target.push_back(static_cast<TokenId>(s));
  }
  p.payload = std::move(operands);
  return p;
}

inline Prompt make_copy_reverse_prompt(PromptId id, std::vector<std::size_t> payload) {
  if (payload.empty()) throw ConfigError("copy_reverse needs a non-empty payload");
  Prompt p;
  p.id = id;
  p.target.assign(payload.rbegin(), payload.rend());
  p.payload = std::move(payload);
  return p;
}

/// Assembles a task from explicit prompts (ids are reassigned densely).
inline Task make_task(TaskKind kind, Vocabulary vocab, std::vector<Prompt> prompts, std::size_t max_len,
                      std::uint64_t seed = 0) {
  if (prompts.empty()) throw ConfigError("task needs at least one prompt");
  TaskSpec spec{kind, std::move(vocab), std::move(prompts), max_len, seed};
  for (std::size_t i = 0; i < spec.prompts.size(); ++i) {
    auto& p = spec.prompts[i];
    p.id = static_cast<PromptId>(i);
    if (p.target.size() + 1 > max_len)
      throw ConfigError("max_len " + std::to_string(max_len) + " cannot hold the correct completion of prompt " +
                        std::to_string(i));
    for (auto t : p.target)
      if (t >= spec.vocab.size() || t == spec.vocab.eos()) throw ConfigError("prompt target uses an invalid token");
  }
  Verifier v(spec);
  return Task{std::move(spec), std::move(v)};
}

/// Synthetic benchmark with size prompts.
///
/// mod_sum_chain: operands in [1, m-1] whose running sums are pairwise
/// distinct; the completion is the chain of running sums then eos.
/// copy_reverse: the completion is the reversed payload then eos.
inline Task build_task(TaskKind kind, std::uint64_t seed, std::size_t size, const TaskOptions& opt = {}) {
  if (size < 1) throw ConfigError("task size must be >= 1");
  RngStream rng = RngStream(seed).split(tag_of("task"));
  std::vector<Prompt> prompts;
  std::set<std::vector<std::size_t>> seen;
  std::size_t target_len = 0;

  if (kind == TaskKind::mod_sum_chain) {
    const std::size_t m = opt.modulus, len = opt.chain_length;
    if (m < 2 || m > 10) throw ConfigError("modulus must be in [2,10]");
    if (len < 1 || len > 6 || len > m) throw ConfigError("chain_length must be in [1, min(6, modulus)]");
    target_len = len;
    for (std::size_t i = 0; i < size; ++i) {
      std::vector<std::size_t> ops;
      for (int attempt = 0; attempt < 4096; ++attempt) {
        ops.clear();
        std::set<std::size_t> sums;
        std::size_t s = 0;
        bool ok = true;
        for (std::size_t k = 0; k < len && ok; ++k) {
          const std::size_t a = 1 + rng.below(m - 1);
          s = (s + a) % m;
          ok = sums.insert(s).second;
          ops.push_back(a);
        }
        if (ok && (!seen.count(ops) || attempt > 64)) break;
        if (attempt == 4095) ops.assign(len, 1);
      }
      seen.insert(ops);
      prompts.push_back(make_mod_sum_prompt(static_cast<PromptId>(i), ops, m));
    }
    const std::size_t max_len = opt.max_len ? opt.max_len : target_len + 2;
    return make_task(kind, mod_sum_vocabulary(m), std::move(prompts), max_len, seed);
  }

  const std::size_t a = opt.alphabet_size, len = opt.payload_length;
  if (a < 1 || a > 8) throw ConfigError("alphabet_size must be in [1,8]");
  if (len < 1 || len > 3) throw ConfigError("payload_length must be in [1,3]");
  target_len = len;
  for (std::size_t i = 0; i < size; ++i) {
    std::vector<std::size_t> payload;
    for (int attempt = 0; attempt < 64; ++attempt) {
      payload.clear();
      for (std::size_t k = 0; k < len; ++k) payload.push_back(rng.below(a));
      if (!seen.count(payload)) break;
    }
    seen.insert(payload);
    prompts.push_back(make_copy_reverse_prompt(static_cast<PromptId>(i), payload));
  }
  const std::size_t max_len = opt.max_len ? opt.max_len : target_len + 2;
  return make_task(kind, copy_reverse_vocabulary(a), std::move(prompts), max_len, seed);
}

inline TaskOptions task_options_of(const RunConfig& cfg) {
  return TaskOptions{cfg.chain_length, cfg.modulus, cfg.payload_length, cfg.alphabet_size, cfg.max_len};
}

inline Task build_task(const RunConfig& cfg) {
  return build_task(cfg.task, cfg.task_seed, cfg.task_size, task_options_of(cfg));
}

/// One prompt per line: id, tab, prompt tokens.
inline std::string export_prompts(const TaskSpec& task) {
  std::string out;
  for (const auto& p : task.prompts) {
    out += std::to_string(p.id);
    out += '\t';
    for (std::size_t k = 0; k < p.payload.size(); ++k) {
      if (k) out += ' ';
      if (task.kind == TaskKind::mod_sum_chain)
        out += std::to_string(p.payload[k]);
      else
        out += task.vocab.symbol(static_cast<TokenId>(p.payload[k]));
    }
    if (task.kind == TaskKind::mod_sum_chain) out += " % " + std::to_string(p.modulus);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Teachers

struct TeacherSpec {
  TeacherMode mode = TeacherMode::near_optimal;
  double kappa = 10.0;
  double sigma = 1.0;
  double support_floor = 50.0;
  double forbidden_fraction = 0.5;
  std::size_t order = 2;
  std::uint64_t seed = 0;
  std::optional<PolicyParams> base;  // matched_perturbed: the student to copy
};

inline PolicyParams uniform_policy(const TaskSpec& task, StudentFamily family, std::size_t order) {
  return PolicyParams(family, order, task.vocab, task.size());
}

/// For each context row, the tokens that continue some correct completion
/// reaching that row. A prefix admits a correct completion iff it is a prefix
/// of the target, so the walk along each target visits every such context.
inline std::vector<std::vector<TokenId>> optimal_continuations(const TaskSpec& task, const PolicyParams& layout) {
  std::vector<std::vector<TokenId>> best(layout.context_rows());
  for (const auto& p : task.prompts) {
    std::vector<TokenId> seq = p.target;
    seq.push_back(task.vocab.eos());
    std::span<const TokenId> s = seq;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      auto& cell = best[layout.context_row(p.id, s.first(t))];
      if (std::find(cell.begin(), cell.end(), seq[t]) == cell.end()) cell.push_back(seq[t]);
    }
  }
  return best;
}

inline PolicyParams build_teacher(const TaskSpec& task, const TeacherSpec& spec) {
  switch (spec.mode) {
    case TeacherMode::matched_perturbed: {
      if (!(spec.sigma >= 0.0)) throw ConfigError("teacher sigma must be >= 0");
      if (!spec.base) throw ConfigError("matched_perturbed teacher needs a base policy");
      PolicyParams t = *spec.base;
      if (spec.sigma > 0.0) {
        RngStream rng = RngStream(spec.seed).split(tag_of("matched_perturbed"));
        for (double& x : t.values()) x += spec.sigma * rng.normal();
      }
      return t;
    }
    case TeacherMode::near_optimal:
    case TeacherMode::adversarial: {
      if (!(spec.kappa > 0.0)) throw ConfigError("teacher kappa must be > 0");
      // Repeated symbols can make two target prefixes share a short context;
      // raise the order until every context has one optimal continuation.
      std::size_t longest = 0;
      for (const auto& p : task.prompts) longest = std::max(longest, p.target.size());
      std::size_t order = spec.order;
      PolicyParams t(StudentFamily::tabular, order, task.vocab, task.size());
      auto best = optimal_continuations(task, t);
      auto ambiguous = [&] {
        return std::any_of(best.begin(), best.end(), [](const auto& c) { return c.size() > 1; });
      };
      while (ambiguous() && order < longest) {
        t = PolicyParams(StudentFamily::tabular, ++order, task.vocab, task.size());
        best = optimal_continuations(task, t);
      }
      const std::size_t v = task.vocab.size();
      for (std::size_t r = 0; r < best.size(); ++r) {
        auto row = t.row(r);
        for (TokenId tok : best[r]) row[tok] = spec.kappa;
      }
      if (spec.mode == TeacherMode::adversarial) {
        if (!(spec.support_floor >= 0.0)) throw ConfigError("support_floor must be >= 0");
        if (!(spec.forbidden_fraction >= 0.0 && spec.forbidden_fraction <= 1.0))
          throw ConfigError("forbidden_fraction must be in [0,1]");
        const RngStream base = RngStream(spec.seed).split(tag_of("adversarial"));
        for (std::size_t r = 0; r < best.size(); ++r) {
          std::vector<TokenId> candidates;
          for (TokenId tok = 0; tok < v; ++tok)
            if (std::find(best[r].begin(), best[r].end(), tok) == best[r].end()) candidates.push_back(tok);
          const auto n_forbid = static_cast<std::size_t>(
              std::llround(spec.forbidden_fraction * static_cast<double>(candidates.size())));
          RngStream rng = base.split(r);
          for (std::size_t i = 0; i < n_forbid; ++i) {
            const std::size_t j = i + rng.below(candidates.size() - i);
            std::swap(candidates[i], candidates[j]);
            t.row(r)[candidates[i]] -= spec.support_floor;
          }
        }
      }
      return t;
    }
  }
  throw ConfigError("unknown teacher mode");
}

inline TeacherSpec teacher_spec_of(const RunConfig& cfg) {
  TeacherSpec s;
  s.mode = cfg.teacher_mode;
  s.kappa = cfg.teacher_kappa;
  s.sigma = cfg.teacher_sigma;
  s.support_floor = cfg.teacher_support_floor;
  s.forbidden_fraction = cfg.teacher_forbidden_fraction;
  s.order = cfg.student_order;
  s.seed = cfg.task_seed ^ 0x7EAC4E5ULL;
  return s;
}

/// Probability of the uniform policy producing the exact target (chance rate).
inline double chance_rate(const TaskSpec& task) {
  double acc = 0.0;
  const double v = static_cast<double>(task.vocab.size());
  for (const auto& p : task.prompts) acc += std::pow(v, -static_cast<double>(p.target.size() + 1));
  return acc / static_cast<double>(task.size());
}

}  // namespace reldist
