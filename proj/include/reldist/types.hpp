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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reldist/error.hpp"

namespace reldist {

using TokenId = std::uint32_t;
using PromptId = std::uint32_t;

/// Token alphabet. Indices are dense in [0, size).
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::string> tokens, TokenId bos, TokenId eos)
      : tokens_(std::move(tokens)), bos_(bos), eos_(eos) {
    if (tokens_.size() < 2) throw ConfigError("vocabulary needs at least two tokens");
    if (bos_ >= tokens_.size() || eos_ >= tokens_.size())
      throw ConfigError("bos/eos id outside vocabulary");
    if (bos_ == eos_) throw ConfigError("bos_id and eos_id must differ");
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId bos() const noexcept { return bos_; }
  TokenId eos() const noexcept { return eos_; }
  const std::string& symbol(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(const std::string& symbol) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (tokens_[i] == symbol) return static_cast<TokenId>(i);
    return std::nullopt;
  }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  TokenId bos_ = 0;
  TokenId eos_ = 1;
};

/// Generated part of one response.
struct Trajectory {
  PromptId prompt = 0;
  std::vector<TokenId> tokens;
  bool terminated = false;  // ended on eos rather than the length cap

  std::size_t length() const noexcept { return tokens.size(); }
  bool operator==(const Trajectory&) const = default;
};

/// Per-token training record. All log-probabilities are in nats.
struct TokenRecord {
  double logp_old = 0.0;
  double logp_cur = 0.0;
  double logp_teacher = 0.0;
  double entropy = 0.0;  // next-token entropy of the rollout policy
  double reward_raw = 0.0;
  double reward_clipped = 0.0;
  double ratio = 1.0;
  std::uint8_t mask = 1;
};

/// One trajectory with its token records. records.size() == traj.length().
struct Rollout {
  std::size_t slot = 0;         // position of the prompt inside the batch
  std::size_t group_index = 0;  // i in 1..G (zero based)
  Trajectory traj;
  std::vector<TokenRecord> records;
};

/// B prompts times G trajectories, stored prompt-major then group-minor.
struct RolloutBatch {
  std::vector<PromptId> prompts;
  std::size_t group_size = 1;
  std::vector<Rollout> rollouts;

  std::size_t token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rollouts) n += r.records.size();
    return n;
  }

  std::span<Rollout> group(std::size_t slot) {
    return std::span<Rollout>(rollouts).subspan(slot * group_size, group_size);
  }
  std::span<const Rollout> group(std::size_t slot) const {
    return std::span<const Rollout>(rollouts).subspan(slot * group_size, group_size);
  }

  template <typename Fn>
  void for_each_record(Fn&& fn) {
    for (auto& r : rollouts)
      for (auto& rec : r.records) fn(rec);
  }
  template <typename Fn>
  void for_each_record(Fn&& fn) const {
    for (const auto& r : rollouts)
      for (const auto& rec : r.records) fn(rec);
  }
};

}  // namespace reldist
