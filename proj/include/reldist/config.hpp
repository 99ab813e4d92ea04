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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reldist/error.hpp"
#include "reldist/text.hpp"

namespace reldist {

enum class Estimator { vanilla_rkl, sg_rkl, reopold, grpo_lite, sft };
enum class TaskKind { mod_sum_chain, copy_reverse };
enum class OptimizerKind { sgd, momentum, adam };
enum class TeacherMode { near_optimal, matched_perturbed, adversarial };
enum class StudentFamily { tabular, ngram_bias };
enum class Scope { batch, group };

namespace detail {

template <typename E, std::size_t N>
struct EnumNames {
  std::array<std::pair<E, std::string_view>, N> entries;

  std::string_view name(E e) const {
    for (const auto& [v, n] : entries)
      if (v == e) return n;
    return "?";
  }

  E parse(std::string_view s, std::string_view field) const {
    for (const auto& [v, n] : entries)
      if (n == s) return v;
    std::string msg = std::string(field) + ": unknown value '" + std::string(s) + "' (expected one of";
    for (const auto& [v, n] : entries) msg += " " + std::string(n);
    throw ConfigError(msg + ")");
  }
};

inline constexpr EnumNames<Estimator, 5> kEstimatorNames{{{{Estimator::vanilla_rkl, "vanilla_rkl"},
                                                            {Estimator::sg_rkl, "sg_rkl"},
                                                            {Estimator::reopold, "reopold"},
                                                            {Estimator::grpo_lite, "grpo_lite"},
                                                            {Estimator::sft, "sft"}}}};
inline constexpr EnumNames<TaskKind, 2> kTaskNames{
    {{{TaskKind::mod_sum_chain, "mod_sum_chain"}, {TaskKind::copy_reverse, "copy_reverse"}}}};
inline constexpr EnumNames<OptimizerKind, 3> kOptimizerNames{
    {{{OptimizerKind::sgd, "sgd"}, {OptimizerKind::momentum, "momentum"}, {OptimizerKind::adam, "adam"}}}};
inline constexpr EnumNames<TeacherMode, 3> kTeacherNames{{{{TeacherMode::near_optimal, "near_optimal"},
                                                           {TeacherMode::matched_perturbed, "matched_perturbed"},
                                                           {TeacherMode::adversarial, "adversarial"}}}};
inline constexpr EnumNames<StudentFamily, 2> kFamilyNames{
    {{{StudentFamily::tabular, "tabular"}, {StudentFamily::ngram_bias, "ngram_bias"}}}};
inline constexpr EnumNames<Scope, 2> kScopeNames{{{{Scope::batch, "batch"}, {Scope::group, "group"}}}};

}  // namespace detail

inline std::string_view to_string(Estimator e) { return detail::kEstimatorNames.name(e); }
inline std::string_view to_string(TaskKind e) { return detail::kTaskNames.name(e); }
inline std::string_view to_string(OptimizerKind e) { return detail::kOptimizerNames.name(e); }
inline std::string_view to_string(TeacherMode e) { return detail::kTeacherNames.name(e); }
inline std::string_view to_string(StudentFamily e) { return detail::kFamilyNames.name(e); }
inline std::string_view to_string(Scope e) { return detail::kScopeNames.name(e); }

inline Estimator parse_estimator(std::string_view s) { return detail::kEstimatorNames.parse(s, "estimator"); }
inline TaskKind parse_task_kind(std::string_view s) { return detail::kTaskNames.parse(s, "task"); }

/// The experiment contract. Field names double as config-file keys.
///
/// switch_step, clip_lambda and entropy_beta are optional; validate_config()
/// fills them with floor(K/3), 0.3 and 0.2.
struct RunConfig {
  std::size_t total_steps = 120;
  std::optional<std::size_t> switch_step;
  std::optional<double> clip_lambda;
  std::optional<double> entropy_beta;
  double learning_rate = 10.0;
  std::size_t group_size = 8;
  std::size_t batch_prompts = 8;
  std::size_t max_len = 0;  // 0: task default
  Estimator estimator = Estimator::reopold;

  TaskKind task = TaskKind::mod_sum_chain;
  std::uint64_t task_seed = 7;
  std::size_t task_size = 16;
  std::size_t chain_length = 3;
  std::size_t modulus = 5;
  std::size_t payload_length = 3;
  std::size_t alphabet_size = 3;

  std::uint64_t seed = 1;
  std::size_t micro_updates = 1;
  std::optional<double> ppo_ratio_clip;

  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  TeacherMode teacher_mode = TeacherMode::near_optimal;
  double teacher_kappa = 10.0;
  double teacher_sigma = 1.0;
  double teacher_support_floor = 50.0;
  double teacher_forbidden_fraction = 0.5;

  StudentFamily student_family = StudentFamily::ngram_bias;
  std::size_t student_order = 2;
  std::size_t warm_start_steps = 40;
  double warm_start_lr = 0.05;
  OptimizerKind warm_start_optimizer = OptimizerKind::adam;

  std::size_t eval_every = 10;
  std::size_t eval_k = 16;
  double eval_temperature = 1.0;
  std::size_t checkpoint_every = 0;
  std::size_t trace_every = 0;

  Scope mask_scope = Scope::batch;
  Scope norm_scope = Scope::batch;
  bool freeze_reward = false;
  bool grpo_std_norm = false;
  std::size_t workers = 1;

  bool operator==(const RunConfig&) const = default;

  double lambda() const { return clip_lambda.value_or(0.3); }
  double beta() const { return entropy_beta.value_or(0.2); }
  std::size_t t_switch() const { return switch_step.value_or(total_steps / 3); }
};

namespace detail {

struct ConfigField {
  std::string_view name;
  std::function<std::optional<std::string>(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
ConfigField size_field(std::string_view name, T RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::optional<std::string>(std::to_string(c.*m)); },
          [m, name](RunConfig& c, std::string_view v) { c.*m = static_cast<T>(parse_uint(v, name)); }};
}

inline ConfigField real_field(std::string_view name, double RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::optional<std::string>(format_double(c.*m)); },
          [m, name](RunConfig& c, std::string_view v) { c.*m = parse_double(v, name); }};
}

inline ConfigField bool_field(std::string_view name, bool RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::optional<std::string>(c.*m ? "true" : "false"); },
          [m, name](RunConfig& c, std::string_view v) { c.*m = parse_bool(v, name); }};
}

inline ConfigField opt_real_field(std::string_view name, std::optional<double> RunConfig::*m) {
  return {name,
          [m](const RunConfig& c) {
            return (c.*m) ? std::optional<std::string>(format_double(*(c.*m))) : std::nullopt;
          },
          [m, name](RunConfig& c, std::string_view v) {
            if (v == "none" || v.empty())
              c.*m = std::nullopt;
            else
              c.*m = parse_double(v, name);
          }};
}

template <typename E, std::size_t N>
ConfigField enum_field(std::string_view name, E RunConfig::*m, const EnumNames<E, N>& names) {
  return {name, [m, &names](const RunConfig& c) { return std::optional<std::string>(names.name(c.*m)); },
          [m, &names, name](RunConfig& c, std::string_view v) { c.*m = names.parse(v, name); }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(size_field("total_steps", &RunConfig::total_steps));
    f.push_back({"switch_step",
                 [](const RunConfig& c) {
                   return c.switch_step ? std::optional<std::string>(std::to_string(*c.switch_step)) : std::nullopt;
                 },
                 [](RunConfig& c, std::string_view v) {
                   if (v == "none" || v.empty())
                     c.switch_step = std::nullopt;
                   else
                     c.switch_step = static_cast<std::size_t>(parse_uint(v, "switch_step"));
                 }});
    f.push_back(opt_real_field("clip_lambda", &RunConfig::clip_lambda));
    f.push_back(opt_real_field("entropy_beta", &RunConfig::entropy_beta));
    f.push_back(real_field("learning_rate", &RunConfig::learning_rate));
    f.push_back(size_field("group_size", &RunConfig::group_size));
    f.push_back(size_field("batch_prompts", &RunConfig::batch_prompts));
    f.push_back(size_field("max_len", &RunConfig::max_len));
    f.push_back(enum_field("estimator", &RunConfig::estimator, kEstimatorNames));
    f.push_back(enum_field("task", &RunConfig::task, kTaskNames));
    f.push_back(size_field("task_seed", &RunConfig::task_seed));
    f.push_back(size_field("task_size", &RunConfig::task_size));
    f.push_back(size_field("chain_length", &RunConfig::chain_length));
    f.push_back(size_field("modulus", &RunConfig::modulus));
    f.push_back(size_field("payload_length", &RunConfig::payload_length));
    f.push_back(size_field("alphabet_size", &RunConfig::alphabet_size));
    f.push_back(size_field("seed", &RunConfig::seed));
    f.push_back(size_field("micro_updates", &RunConfig::micro_updates));
    f.push_back(opt_real_field("ppo_ratio_clip", &RunConfig::ppo_ratio_clip));
    f.push_back(enum_field("optimizer", &RunConfig::optimizer, kOptimizerNames));
    f.push_back(real_field("momentum", &RunConfig::momentum));
    f.push_back(real_field("adam_beta1", &RunConfig::adam_beta1));
    f.push_back(real_field("adam_beta2", &RunConfig::adam_beta2));
    f.push_back(real_field("adam_eps", &RunConfig::adam_eps));
    f.push_back(enum_field("teacher_mode", &RunConfig::teacher_mode, kTeacherNames));
    f.push_back(real_field("teacher_kappa", &RunConfig::teacher_kappa));
    f.push_back(real_field("teacher_sigma", &RunConfig::teacher_sigma));
    f.push_back(real_field("teacher_support_floor", &RunConfig::teacher_support_floor));
    f.push_back(real_field("teacher_forbidden_fraction", &RunConfig::teacher_forbidden_fraction));
    f.push_back(enum_field("student_family", &RunConfig::student_family, kFamilyNames));
    f.push_back(size_field("student_order", &RunConfig::student_order));
    f.push_back(size_field("warm_start_steps", &RunConfig::warm_start_steps));
    f.push_back(real_field("warm_start_lr", &RunConfig::warm_start_lr));
    f.push_back(enum_field("warm_start_optimizer", &RunConfig::warm_start_optimizer, kOptimizerNames));
    f.push_back(size_field("eval_every", &RunConfig::eval_every));
    f.push_back(size_field("eval_k", &RunConfig::eval_k));
    f.push_back(real_field("eval_temperature", &RunConfig::eval_temperature));
    f.push_back(size_field("checkpoint_every", &RunConfig::checkpoint_every));
    f.push_back(size_field("trace_every", &RunConfig::trace_every));
    f.push_back(enum_field("mask_scope", &RunConfig::mask_scope, kScopeNames));
    f.push_back(enum_field("norm_scope", &RunConfig::norm_scope, kScopeNames));
    f.push_back(bool_field("freeze_reward", &RunConfig::freeze_reward));
    f.push_back(bool_field("grpo_std_norm", &RunConfig::grpo_std_norm));
    f.push_back(size_field("workers", &RunConfig::workers));
    return f;
  }();
  return fields;
}

}  // namespace detail

/// All recognised config keys, in render order.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.emplace_back(f.name);
  return keys;
}

/// Sets one field from its textual value. Throws ConfigError on unknown keys.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : detail::config_fields()) {
    if (f.name == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Applies a "key=value" override.
inline void apply_override(RunConfig& cfg, std::string_view kv) {
  const auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like key=value: '" + std::string(kv) + "'");
  set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

/// Flat "key = value" document. Unset optional fields are omitted.
inline std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) {
    if (auto v = f.get(cfg)) {
      out += f.name;
      out += " = ";
      out += *v;
      out += '\n';
    }
  }
  return out;
}

/// Parses a flat key-value document; '#' starts a comment. Missing keys keep defaults.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

/// Checks every invariant and fills defaults. Throws ConfigError naming the
/// first offending field.
inline RunConfig validate_config(RunConfig cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  auto finite_positive = [&](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) fail(std::string(name) + " must be a positive finite number");
  };
  auto unit_open = [&](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) fail(std::string(name) + " must lie in [0,1)");
  };

  if (cfg.clip_lambda && !(*cfg.clip_lambda >= 0.0 && *cfg.clip_lambda < 1.0))
    fail("clip_lambda must lie in [0,1)");
  if (cfg.entropy_beta && !(*cfg.entropy_beta > 0.0 && *cfg.entropy_beta <= 1.0))
    fail("entropy_beta must be in (0,1]");
  if (cfg.switch_step && *cfg.switch_step > cfg.total_steps) fail("switch_step must satisfy 0 <= switch_step <= total_steps");
  finite_positive(cfg.learning_rate, "learning_rate");
  if (cfg.group_size < 1) fail("group_size must be >= 1");
  if (cfg.batch_prompts < 1) fail("batch_prompts must be >= 1");
  if (cfg.micro_updates < 1) fail("micro_updates must be >= 1");
  if (cfg.task_size < 1) fail("task_size must be >= 1");
  if (cfg.batch_prompts > cfg.task_size) fail("batch_prompts must not exceed task_size");
  if (cfg.modulus < 2 || cfg.modulus > 10) fail("modulus must be in [2,10]");
  if (cfg.chain_length < 1 || cfg.chain_length > 6) fail("chain_length must be in [1,6]");
  if (cfg.chain_length > cfg.modulus) fail("chain_length must not exceed modulus (running sums are kept distinct)");
  if (cfg.payload_length < 1 || cfg.payload_length > 3) fail("payload_length must be in [1,3]");
  if (cfg.alphabet_size < 1 || cfg.alphabet_size > 8) fail("alphabet_size must be in [1,8]");
  if (cfg.ppo_ratio_clip && !(std::isfinite(*cfg.ppo_ratio_clip) && *cfg.ppo_ratio_clip > 0.0))
    fail("ppo_ratio_clip must be positive when set");
  unit_open(cfg.momentum, "momentum");
  unit_open(cfg.adam_beta1, "adam_beta1");
  unit_open(cfg.adam_beta2, "adam_beta2");
  finite_positive(cfg.adam_eps, "adam_eps");
  finite_positive(cfg.teacher_kappa, "teacher_kappa");
  if (!(cfg.teacher_sigma >= 0.0) || !std::isfinite(cfg.teacher_sigma)) fail("teacher_sigma must be >= 0");
  if (!(cfg.teacher_support_floor >= 0.0) || !std::isfinite(cfg.teacher_support_floor))
    fail("teacher_support_floor must be >= 0");
  if (!(cfg.teacher_forbidden_fraction >= 0.0 && cfg.teacher_forbidden_fraction <= 1.0))
    fail("teacher_forbidden_fraction must be in [0,1]");
  if (cfg.student_order < 1 || cfg.student_order > 4) fail("student_order must be in [1,4]");
  finite_positive(cfg.warm_start_lr, "warm_start_lr");
  if (cfg.eval_k < 1) fail("eval_k must be >= 1");
  finite_positive(cfg.eval_temperature, "eval_temperature");
  if (cfg.workers < 1) fail("workers must be >= 1");

  if (!cfg.switch_step) cfg.switch_step = cfg.total_steps / 3;
  if (!cfg.clip_lambda) cfg.clip_lambda = 0.3;
  if (!cfg.entropy_beta) cfg.entropy_beta = 0.2;
  return cfg;
}

/// 16 hex digits identifying the rendered config.
inline std::string config_digest(const RunConfig& cfg) { return hex64(fnv1a64(render_config(cfg))); }

}  // namespace reldist
