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
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reldist/config.hpp"
#include "reldist/error.hpp"
#include "reldist/numeric.hpp"
#include "reldist/policy.hpp"
#include "reldist/tasks.hpp"
#include "reldist/text.hpp"
#include "reldist/trainer.hpp"

namespace reldist {

inline constexpr std::size_t kCheckpointVersion = 1;

/// In-memory form of a checkpoint file.
///
///   format_version 1
///   config_digest <16 hex digits>
///   step <k>
///   param_family <family tag>
///   param_shape <features> <vocab>
///   params <v0> <v1> ...
///   optimizer_kind <sgd|momentum|adam>     (optional block)
///   optimizer_steps <n>
///   optimizer_first <...>
///   optimizer_second <...>
struct Checkpoint {
  std::size_t format_version = kCheckpointVersion;
  std::string config_digest;
  std::size_t step = 0;
  std::string param_family;
  std::size_t features = 0;
  std::size_t vocab = 0;
  std::vector<double> params;
  std::optional<OptimizerState> optimizer;
};

namespace detail {

inline void put_vector(std::ostringstream& out, std::string_view key, std::span<const double> xs) {
  out << key;
  for (double x : xs) out << ' ' << format_double(x);
  out << '\n';
}

inline std::vector<double> get_vector(const std::vector<std::string>& fields, std::string_view key) {
  std::vector<double> xs;
  xs.reserve(fields.size() - 1);
  for (std::size_t i = 1; i < fields.size(); ++i) xs.push_back(parse_double(fields[i], key));
  return xs;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const PolicyParams& params, const RunConfig& cfg, std::size_t step,
                                  const OptimizerState* opt = nullptr) {
  if (!all_finite(params.values())) throw DomainError("refusing to checkpoint non-finite parameters");
  Checkpoint c;
  c.config_digest = config_digest(cfg);
  c.step = step;
  c.param_family = params.family_tag();
  c.features = params.feature_count();
  c.vocab = params.vocab_size();
  c.params.assign(params.values().begin(), params.values().end());
  if (opt) c.optimizer = *opt;
  return c;
}

inline std::string render_checkpoint(const Checkpoint& c) {
  std::ostringstream out;
  out << "format_version " << c.format_version << '\n'
      << "config_digest " << c.config_digest << '\n'
      << "step " << c.step << '\n'
      << "param_family " << c.param_family << '\n'
      << "param_shape " << c.features << ' ' << c.vocab << '\n';
  detail::put_vector(out, "params", c.params);
  if (c.optimizer) {
    out << "optimizer_kind " << to_string(c.optimizer->kind) << '\n' << "optimizer_steps " << c.optimizer->steps << '\n';
    detail::put_vector(out, "optimizer_first", c.optimizer->first);
    detail::put_vector(out, "optimizer_second", c.optimizer->second);
  }
  return out.str();
}

inline Checkpoint parse_checkpoint(std::string_view text) {
  Checkpoint c;
  bool saw_version = false, saw_params = false, saw_shape = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_ws(line);
    if (f.empty()) continue;
    const std::string& key = f[0];
    auto one = [&]() -> const std::string& {
      if (f.size() != 2) throw IoError("checkpoint: field '" + key + "' expects one value");
      return f[1];
    };
    if (key == "format_version") {
      c.format_version = parse_uint(one(), key);
      if (c.format_version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported format_version " + std::to_string(c.format_version));
      saw_version = true;
    } else if (key == "config_digest") {
      c.config_digest = one();
    } else if (key == "step") {
      c.step = parse_uint(one(), key);
    } else if (key == "param_family") {
      c.param_family = one();
    } else if (key == "param_shape") {
      if (f.size() != 3) throw IoError("checkpoint: param_shape expects two values");
      c.features = parse_uint(f[1], key);
      c.vocab = parse_uint(f[2], key);
      saw_shape = true;
    } else if (key == "params") {
      c.params = detail::get_vector(f, key);
      saw_params = true;
    } else if (key == "optimizer_kind") {
      if (!c.optimizer) c.optimizer.emplace();
      c.optimizer->kind = detail::kOptimizerNames.parse(one(), key);
    } else if (key == "optimizer_steps") {
      if (!c.optimizer) c.optimizer.emplace();
      c.optimizer->steps = parse_uint(one(), key);
    } else if (key == "optimizer_first") {
      if (!c.optimizer) c.optimizer.emplace();
      c.optimizer->first = detail::get_vector(f, key);
    } else if (key == "optimizer_second") {
      if (!c.optimizer) c.optimizer.emplace();
      c.optimizer->second = detail::get_vector(f, key);
    } else {
      throw IoError("checkpoint: unknown field '" + key + "'");
    }
  }
  if (!saw_version) throw IoError("checkpoint: missing format_version");
  if (!saw_shape || !saw_params) throw IoError("checkpoint: missing param_shape or params");
  if (c.params.size() != c.features * c.vocab) throw IoError("checkpoint: params do not match param_shape");
  return c;
}

inline void save_checkpoint(const std::string& path, const PolicyParams& params, const RunConfig& cfg,
                            std::size_t step, const OptimizerState* opt = nullptr) {
  write_file(path, render_checkpoint(make_checkpoint(params, cfg, step, opt)));
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

/// Family and order encoded in a family tag.
inline std::pair<StudentFamily, std::size_t> parse_family_tag(std::string_view tag) {
  const auto colon = tag.rfind(':');
  if (colon == std::string_view::npos) throw IoError("bad param_family '" + std::string(tag) + "'");
  const std::string_view head = tag.substr(0, colon);
  const auto order = static_cast<std::size_t>(parse_uint(tag.substr(colon + 1), "param_family order"));
  if (head == "tabular_ngram") return {StudentFamily::tabular, order};
  if (head == "linear_feature:ngram_bias") return {StudentFamily::ngram_bias, order};
  throw IoError("bad param_family '" + std::string(tag) + "'");
}

/// Rebuilds the policy on the task's vocabulary and prompt set.
inline PolicyParams restore_policy(const Checkpoint& c, const TaskSpec& task) {
  const auto [family, order] = parse_family_tag(c.param_family);
  PolicyParams p(family, order, task.vocab, task.size());
  if (p.feature_count() != c.features || p.vocab_size() != c.vocab)
    throw IoError("checkpoint shape does not match the task");
  std::copy(c.params.begin(), c.params.end(), p.values().begin());
  return p;
}

/// Resume point for train(): restores parameters and optimiser moments.
inline ResumeState resume_state_of(const Checkpoint& c, const Experiment& ex) {
  if (c.config_digest != config_digest(ex.cfg)) throw ConfigError("checkpoint was written under a different config");
  ResumeState r{c.step, restore_policy(c, ex.task.spec), c.optimizer.value_or(optimizer_of(ex.cfg))};
  if (c.optimizer) {
    OptimizerState base = optimizer_of(ex.cfg);
    base.steps = c.optimizer->steps;
    base.first = c.optimizer->first;
    base.second = c.optimizer->second;
    if (base.kind != c.optimizer->kind) throw ConfigError("checkpoint optimizer does not match the config");
    r.optimizer = std::move(base);
  }
  return r;
}

}  // namespace reldist
