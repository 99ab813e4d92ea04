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
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reldist/checkpoint.hpp"
#include "reldist/config.hpp"
#include "reldist/diagnose.hpp"
#include "reldist/error.hpp"
#include "reldist/metrics.hpp"
#include "reldist/tasks.hpp"
#include "reldist/text.hpp"
#include "reldist/trainer.hpp"
#include "reldist/verify.hpp"

namespace reldist::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kRuntimeAbort = 3,
  kVerifyFailed = 4,
  kIoError = 5,
};

/// Config file (optional) plus key=value overrides, not yet validated.
inline RunConfig load_raw_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : parse_config(read_file(path));
  for (const auto& kv : overrides) apply_override(cfg, kv);
  return cfg;
}

inline std::string run_id_of(const RunConfig& cfg) { return "run-" + config_digest(cfg); }

inline void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

inline std::string eval_line(const std::string& label, const EvalMetrics& m) {
  return label + " avg_at_k=" + format_double(m.avg_at_k) + " pass_at_k=" + format_double(m.pass_at_k) +
         " maj_at_k=" + format_double(m.maj_at_k) + "\n";
}

struct TrainOutcome {
  TrainResult result;
  EvalMetrics final_eval;
};

/// Trains into out_dir: config.snapshot, checkpoints/, metrics.csv,
/// metrics.ndjson, trace.ndjson (when tracing), plots and report.txt.
inline TrainOutcome cmd_train(const RunConfig& raw, const fs::path& out_dir, const std::string& resume_path = {}) {
  const RunConfig cfg = validate_config(raw);  // before anything touches out_dir
  const Experiment ex = prepare_experiment(cfg);
  make_dirs(out_dir / "checkpoints");
  write_file((out_dir / "config.snapshot").string(), render_config(cfg));
  save_checkpoint((out_dir / "checkpoints" / "teacher").string(), ex.teacher, cfg, 0);

  const std::string run_id = run_id_of(cfg);
  std::string trace;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t step, const PolicyParams& p, const OptimizerState& o) {
    save_checkpoint((out_dir / "checkpoints" / ("step_" + std::to_string(step))).string(), p, cfg, step, &o);
  };
  hooks.on_trace = [&](std::size_t, const RolloutBatch& b) { trace += trace_of(b, run_id); };
  auto flush_trace = [&] {
    if (cfg.trace_every > 0) write_file((out_dir / "trace.ndjson").string(), trace);
  };

  std::optional<ResumeState> resume;
  if (!resume_path.empty()) resume = resume_state_of(load_checkpoint(resume_path), ex);
  TrainOutcome outcome;
  try {
    outcome.result = train(ex, hooks, resume ? &*resume : nullptr);
  } catch (const NonFiniteError& e) {
    flush_trace();
    write_file((out_dir / "abort_dump.ndjson").string(), e.dump());
    throw;
  }
  flush_trace();
  const TrainResult& res = outcome.result;
  save_checkpoint((out_dir / "checkpoints" / "final").string(), res.params, cfg, cfg.total_steps, &res.optimizer);
  write_run_log(res.log, out_dir);
  write_run_plots(res.log, out_dir);

  outcome.final_eval = !res.log.empty() && res.log.steps().back().eval
                           ? *res.log.steps().back().eval
                           : evaluate(res.params, ex.task, cfg.eval_k, eval_seed_of(cfg), cfg.eval_temperature, cfg.workers);
  std::string report = "run_id " + run_id + "\nconfig_digest " + config_digest(cfg) + "\nestimator " +
                       std::string(to_string(cfg.estimator)) + "\nsteps " + std::to_string(res.log.steps().size()) + "\n";
  std::size_t skipped = 0;
  for (const auto& r : res.log.steps()) skipped += r.skipped ? 1 : 0;
  report += "skipped_steps " + std::to_string(skipped) + "\n";
  report += "chance_rate " + format_double(chance_rate(ex.task.spec)) + "\n";
  if (res.log.initial_eval) report += eval_line("warm_start", *res.log.initial_eval);
  report += eval_line("final", outcome.final_eval);
  if (!res.log.empty() && res.log.steps().back().exact_rkl)
    report += "final_exact_rkl " + format_double(*res.log.steps().back().exact_rkl) + "\n";
  write_file((out_dir / "report.txt").string(), report);
  return outcome;
}

inline bool cmd_verify(const fs::path& out_dir, const VerifyOptions& opt, std::ostream& out) {
  const auto checks = run_verification(opt);
  const std::string report = verification_report(checks);
  make_dirs(out_dir);
  write_file((out_dir / "report.txt").string(), report);
  out << report;
  return all_passed(checks);
}

/// Policy to evaluate: a checkpoint path, or "uniform" / "teacher" built from the config.
inline nlohmann::ordered_json cmd_eval(const RunConfig& raw, const std::string& policy, std::size_t k,
                                       std::optional<std::uint64_t> seed) {
  RunConfig cfg = validate_config(raw);
  if (k < 1) throw ConfigError("K must be >= 1");
  const Task task = build_task(cfg);
  PolicyParams params;
  if (policy == "uniform") {
    params = uniform_policy(task.spec, cfg.student_family, cfg.student_order);
  } else if (policy == "teacher") {
    params = prepare_experiment(cfg).teacher;
  } else {
    params = restore_policy(load_checkpoint(policy), task.spec);
  }
  const auto m = evaluate(params, task, k, seed.value_or(eval_seed_of(cfg)), cfg.eval_temperature, cfg.workers);
  nlohmann::ordered_json j;
  j["policy"] = policy;
  j["task"] = std::string(to_string(cfg.task));
  j["k"] = k;
  j["avg_at_k"] = m.avg_at_k;
  j["pass_at_k"] = m.pass_at_k;
  j["maj_at_k"] = m.maj_at_k;
  j["chance_rate"] = chance_rate(task.spec);
  return j;
}

/// Diagnoses a trace file, or (when trace_path is empty) one freshly sampled
/// batch of the warm-started student against the configured teacher.
inline Diagnostics cmd_diagnose(const RunConfig& raw, const std::string& trace_path, const fs::path& out_dir,
                                const std::vector<double>& lambdas, const std::vector<double>& betas) {
  for (double l : lambdas)
    if (!(l >= 0.0 && l < 1.0)) throw ConfigError("clip_lambda must lie in [0,1)");
  for (double b : betas)
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("entropy_beta must be in (0,1]");
  std::vector<TraceRecord> trace;
  std::string source;
  if (!trace_path.empty()) {
    trace = parse_trace(read_file(trace_path));
  } else {
    const RunConfig cfg = validate_config(raw);
    const Experiment ex = prepare_experiment(cfg);
    const RngStream rng = RngStream(cfg.seed).split(tag_of("diagnose"));
    const auto prompts = sample_prompts(ex.task.spec.size(), cfg.batch_prompts, rng.split(tag_of("batch")));
    const auto batch = generate_rollouts(ex.student, ex.student, ex.teacher, prompts, cfg.group_size,
                                         ex.task.spec.max_len, rng.split(tag_of("rollout")), cfg.workers);
    source = trace_of(batch, run_id_of(cfg));
    trace = parse_trace(source);
  }
  const Diagnostics d = diagnose(trace, lambdas, betas);
  write_diagnostics(d, out_dir);
  if (trace_path.empty()) write_file((out_dir / "trace.ndjson").string(), source);
  return d;
}

enum class SweepAxis { lambda, beta, t_switch };

inline RunConfig with_axis(RunConfig cfg, SweepAxis axis, double v) {
  switch (axis) {
    case SweepAxis::lambda: cfg.clip_lambda = v; break;
    case SweepAxis::beta: cfg.entropy_beta = v; break;
    case SweepAxis::t_switch:
      if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError("t_switch sweep values must be non-negative integers");
      cfg.switch_step = static_cast<std::size_t>(v);
      break;
  }
  return cfg;
}

/// One train + eval per value with a shared seed; writes sweep.csv and one run directory per value.
inline std::string cmd_sweep(const RunConfig& raw, SweepAxis axis, const std::string& axis_name,
                             const std::vector<double>& values, const fs::path& out_dir) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunConfig> cfgs;
  for (double v : values) cfgs.push_back(validate_config(with_axis(raw, axis, v)));
  std::string table = "axis,value,avg_at_k,pass_at_k,maj_at_k,final_mean_entropy,final_exact_rkl\n";
  std::vector<std::string> labels;
  std::vector<double> avgs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string label = axis_name + "_" + format_double(values[i]);
    const auto o = cmd_train(cfgs[i], out_dir / label);
    const auto& steps = o.result.log.steps();
    table += axis_name + "," + format_double(values[i]) + "," + format_double(o.final_eval.avg_at_k) + "," +
             format_double(o.final_eval.pass_at_k) + "," + format_double(o.final_eval.maj_at_k) + "," +
             (steps.empty() ? std::string() : format_double(steps.back().mean_entropy)) + "," +
             (steps.empty() || !steps.back().exact_rkl ? std::string() : format_double(*steps.back().exact_rkl)) + "\n";
    labels.push_back(format_double(values[i]));
    avgs.push_back(o.final_eval.avg_at_k);
  }
  write_file((out_dir / "sweep.csv").string(), table);
  write_file((out_dir / "sweep.svg").string(), svg_bars("final avg@k by " + axis_name, labels, avgs));
  return table;
}

/// Entry point shared by the executable and the tests. args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"reldist: relaxed on-policy distillation laboratory"};
  app.require_subcommand(1);
  std::string config_path, out_dir, trace_path, resume_path, policy, axis_name;
  std::vector<std::string> overrides;
  std::vector<double> lambdas = kDefaultLambdaSweep, betas = kDefaultBetaSweep, values;
  std::size_t k = 16;
  std::optional<std::uint64_t> seed;
  std::uint64_t verify_seed = VerifyOptions{}.seed;
  bool corrupt = false;

  auto common = [&](CLI::App* sub, bool need_out) {
    sub->add_option("-c,--config", config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", overrides, "override key=value (repeatable)");
    auto* o = sub->add_option("-o,--out", out_dir, "output directory");
    if (need_out) o->required();
  };
  auto* train_cmd = app.add_subcommand("train", "train a student");
  common(train_cmd, true);
  train_cmd->add_option("--resume", resume_path, "resume from a checkpoint")->check(CLI::ExistingFile);

  auto* verify_cmd = app.add_subcommand("verify", "run the oracle suite");
  verify_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  verify_cmd->add_option("--seed", verify_seed, "seed of the random instances");
  verify_cmd->add_flag("--corrupt-grad-log-prob", corrupt, "fault injection: perturb grad_log_prob");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy");
  common(eval_cmd, false);
  eval_cmd->add_option("-p,--policy,--checkpoint", policy, "checkpoint path, 'uniform' or 'teacher'")->required();
  eval_cmd->add_option("-k,--k", k, "samples per prompt");
  eval_cmd->add_option("--seed", seed, "evaluation seed (default: the training eval seed)");

  auto* diag_cmd = app.add_subcommand("diagnose", "reward histogram, entropy buckets, lambda/beta sweeps");
  common(diag_cmd, true);
  diag_cmd->add_option("-t,--trace", trace_path, "trace NDJSON (default: sample a batch from the config)")
      ->check(CLI::ExistingFile);
  diag_cmd->add_option("--lambdas", lambdas, "clip coefficients")->delimiter(',');
  diag_cmd->add_option("--betas", betas, "entropy percentiles")->delimiter(',');

  auto* sweep_cmd = app.add_subcommand("sweep", "train + eval across one hyperparameter");
  common(sweep_cmd, true);
  sweep_cmd->add_option("--axis", axis_name, "lambda, beta or t_switch")
      ->required()
      ->check(CLI::IsMember({"lambda", "beta", "t_switch"}));
  sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) {
      const auto o = cmd_train(load_raw_config(config_path, overrides), out_dir, resume_path);
      out << read_file((fs::path(out_dir) / "report.txt").string());
      (void)o;
    } else if (*verify_cmd) {
      VerifyOptions vo;
      vo.seed = verify_seed;
      vo.corrupt_grad_log_prob = corrupt;
      return cmd_verify(out_dir, vo, out) ? kOk : kVerifyFailed;
    } else if (*eval_cmd) {
      const auto j = cmd_eval(load_raw_config(config_path, overrides), policy, k, seed);
      if (!out_dir.empty()) {
        make_dirs(out_dir);
        write_file((fs::path(out_dir) / "eval.json").string(), j.dump(2) + "\n");
      }
      out << j.dump() << "\n";
    } else if (*diag_cmd) {
      const auto d = cmd_diagnose(load_raw_config(config_path, overrides), trace_path, out_dir, lambdas, betas);
      out << "tokens " << d.histogram.total() << "\n";
    } else if (*sweep_cmd) {
      const SweepAxis axis = axis_name == "lambda" ? SweepAxis::lambda
                             : axis_name == "beta" ? SweepAxis::beta
                                                   : SweepAxis::t_switch;
      out << cmd_sweep(load_raw_config(config_path, overrides), axis, axis_name, values, out_dir);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NonFiniteError& e) {
    err << "aborted: " << e.what() << "\n";
    return kRuntimeAbort;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeAbort;
  }
  return kOk;
}

}  // namespace reldist::cli
