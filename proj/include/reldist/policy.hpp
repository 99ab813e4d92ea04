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

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/numeric.hpp"
#include "reldist/rng.hpp"
#include "reldist/types.hpp"

namespace reldist {

/// Parameters of an autoregressive contextual softmax policy.
///
/// Contexts are (prompt, last min(n, t) generated tokens). Every such key owns a
/// dense row of V logits, so the table covers all reachable contexts up front.
/// The ngram_bias family adds one shared row of per-token biases that is active
/// in every context; this is the linear-feature family with features
/// one_hot(context) + 1.
class PolicyParams {
 public:
  PolicyParams() = default;

  PolicyParams(StudentFamily family, std::size_t order, Vocabulary vocab, std::size_t num_prompts)
      : family_(family), order_(order), vocab_(std::move(vocab)), num_prompts_(num_prompts) {
    if (order_ < 1) throw ConfigError("policy order must be >= 1");
    if (num_prompts_ < 1) throw ConfigError("policy needs at least one prompt");
    std::size_t block = 1;
    rows_per_prompt_ = 0;
    for (std::size_t j = 0; j <= order_; ++j) {
      rows_per_prompt_ += block;
      block *= vocab_.size();
    }
    values_.assign(feature_count() * vocab_.size(), 0.0);
  }

  StudentFamily family() const noexcept { return family_; }
  std::size_t order() const noexcept { return order_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  std::size_t num_prompts() const noexcept { return num_prompts_; }
  std::size_t rows_per_prompt() const noexcept { return rows_per_prompt_; }
  std::size_t context_rows() const noexcept { return num_prompts_ * rows_per_prompt_; }
  bool has_bias() const noexcept { return family_ == StudentFamily::ngram_bias; }
  std::size_t feature_count() const noexcept { return context_rows() + (has_bias() ? 1 : 0); }
  std::size_t bias_feature() const noexcept { return context_rows(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> row(std::size_t feature) { return std::span<double>(values_).subspan(feature * vocab_.size(), vocab_.size()); }
  std::span<const double> row(std::size_t feature) const {
    return std::span<const double>(values_).subspan(feature * vocab_.size(), vocab_.size());
  }

  /// Row index of the context reached after prefix under prompt.
  std::size_t context_row(PromptId prompt, std::span<const TokenId> prefix) const {
    if (prompt >= num_prompts_) throw DomainError("unknown prompt id " + std::to_string(prompt));
    const std::size_t v = vocab_.size();
    const std::size_t h = std::min(order_, prefix.size());
    std::size_t offset = 0, block = 1;
    for (std::size_t j = 0; j < h; ++j) {
      offset += block;
      block *= v;
    }
    std::size_t code = 0;
    for (std::size_t j = prefix.size() - h; j < prefix.size(); ++j) {
      if (prefix[j] >= v) throw DomainError("token id " + std::to_string(prefix[j]) + " outside vocabulary");
      code = code * v + prefix[j];
    }
    return prompt * rows_per_prompt_ + offset + code;
  }

  /// Active features (index, value) for a context.
  template <typename Fn>
  void for_each_feature(std::size_t context, Fn&& fn) const {
    fn(context, 1.0);
    if (has_bias()) fn(bias_feature(), 1.0);
  }

  /// Writes the logits of the context into out (size V).
  void logits(PromptId prompt, std::span<const TokenId> prefix, std::span<double> out) const {
    const std::size_t ctx = context_row(prompt, prefix);
    std::fill(out.begin(), out.end(), 0.0);
    for_each_feature(ctx, [&](std::size_t f, double w) {
      const auto r = row(f);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * r[i];
    });
  }

  /// Overwrites the context row so that logits(prompt, prefix) == values (bias untouched).
  void set_context_logits(PromptId prompt, std::span<const TokenId> prefix, std::span<const double> values) {
    auto r = row(context_row(prompt, prefix));
    std::copy(values.begin(), values.end(), r.begin());
  }

  bool operator==(const PolicyParams&) const = default;

  /// "tabular_ngram:2" or "linear_feature:ngram_bias:2".
  std::string family_tag() const {
    if (family_ == StudentFamily::tabular) return "tabular_ngram:" + std::to_string(order_);
    return "linear_feature:ngram_bias:" + std::to_string(order_);
  }

 private:
  StudentFamily family_ = StudentFamily::tabular;
  std::size_t order_ = 1;
  Vocabulary vocab_;
  std::size_t num_prompts_ = 0;
  std::size_t rows_per_prompt_ = 0;
  std::vector<double> values_;
};

struct NextTokenDistribution {
  std::vector<double> logits;
  std::vector<double> logprobs;
  double entropy = 0.0;
};

/// pi(. | prompt, prefix) at the given sampling temperature.
inline NextTokenDistribution next_dist(const PolicyParams& params, PromptId prompt, std::span<const TokenId> prefix,
                                       double temperature = 1.0) {
  NextTokenDistribution d;
  d.logits.resize(params.vocab_size());
  params.logits(prompt, prefix, d.logits);
  d.logprobs = d.logits;
  if (temperature != 1.0)
    for (double& x : d.logprobs) x /= temperature;
  log_softmax_inplace(d.logprobs);
  d.entropy = entropy_of(d.logprobs);
  return d;
}

inline double log_prob(const PolicyParams& params, PromptId prompt, std::span<const TokenId> prefix, TokenId token) {
  if (token >= params.vocab_size()) throw DomainError("token id outside vocabulary");
  return next_dist(params, prompt, prefix).logprobs[token];
}

/// Gradient of log pi(token | context) with respect to the flat parameter
/// vector: the softmax residual e_token - p placed on each active feature row.
struct SparseGradient {
  std::vector<std::pair<std::size_t, double>> features;
  std::vector<double> residual;

  /// dense += coeff * gradient.
  void add_to(std::span<double> dense, double coeff) const {
    const std::size_t v = residual.size();
    for (const auto& [f, w] : features) {
      double* row = dense.data() + f * v;
      const double c = coeff * w;
      for (std::size_t i = 0; i < v; ++i) row[i] += c * residual[i];
    }
  }

  std::vector<double> to_dense(std::size_t size) const {
    std::vector<double> out(size, 0.0);
    add_to(out, 1.0);
    return out;
  }
};

inline SparseGradient grad_log_prob(const PolicyParams& params, PromptId prompt, std::span<const TokenId> prefix,
                                    TokenId token) {
  if (token >= params.vocab_size()) throw DomainError("token id outside vocabulary");
  SparseGradient g;
  const std::size_t ctx = params.context_row(prompt, prefix);
  params.for_each_feature(ctx, [&](std::size_t f, double w) { g.features.emplace_back(f, w); });
  const auto d = next_dist(params, prompt, prefix);
  g.residual.resize(params.vocab_size());
  for (std::size_t i = 0; i < g.residual.size(); ++i) g.residual[i] = -std::exp(d.logprobs[i]);
  g.residual[token] += 1.0;
  return g;
}

/// Inverse-CDF draw from log-probabilities.
inline TokenId sample_token(std::span<const double> logprobs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    const double p = std::exp(logprobs[i]);
    if (p > 0.0) last_positive = i;
    acc += p;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);  // rounding slack
}

struct SampledTrajectory {
  Trajectory traj;
  std::vector<double> logp;     // log-prob of each sampled token under the sampling policy
  std::vector<double> entropy;  // next-token entropy at each position
};

/// Samples until eos or max_len tokens.
inline SampledTrajectory sample_trajectory(const PolicyParams& params, PromptId prompt, std::size_t max_len,
                                           RngStream rng, double temperature = 1.0) {
  if (max_len < 1) throw DomainError("max_len must be >= 1");
  SampledTrajectory out;
  out.traj.prompt = prompt;
  const TokenId eos = params.vocab().eos();
  while (out.traj.tokens.size() < max_len) {
    const auto d = next_dist(params, prompt, out.traj.tokens, temperature);
    const TokenId tok = sample_token(d.logprobs, rng);
    out.traj.tokens.push_back(tok);
    out.logp.push_back(d.logprobs[tok]);
    out.entropy.push_back(d.entropy);
    if (tok == eos) {
      out.traj.terminated = true;
      break;
    }
  }
  return out;
}

/// Log-probability of a whole trajectory (sum over tokens).
inline double sequence_log_prob(const PolicyParams& params, const Trajectory& traj) {
  double lp = 0.0;
  std::span<const TokenId> toks = traj.tokens;
  for (std::size_t t = 0; t < toks.size(); ++t) lp += log_prob(params, traj.prompt, toks.first(t), toks[t]);
  return lp;
}

}  // namespace reldist
