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
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reldist/error.hpp"
#include "reldist/parallel.hpp"
#include "reldist/policy.hpp"
#include "reldist/rng.hpp"
#include "reldist/signal.hpp"
#include "reldist/tasks.hpp"
#include "reldist/text.hpp"

namespace reldist {

// ---------------------------------------------------------------------------
// Evaluation

struct EvalMetrics {
  double avg_at_k = 0.0;
  double pass_at_k = 0.0;
  double maj_at_k = 0.0;

  bool operator==(const EvalMetrics&) const = default;
};

/// K completions for one prompt. Sample j uses stream rng.split(j), so
/// extending K never replays earlier samples.
inline std::vector<Trajectory> sample_completions(const PolicyParams& params, const TaskSpec& task, PromptId prompt,
                                                  std::size_t k, const RngStream& rng, double temperature = 1.0) {
  if (k < 1) throw DomainError("K must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j)
    out.push_back(sample_trajectory(params, prompt, task.max_len, rng.split(j), temperature).traj);
  return out;
}

inline double avg_of(const Verifier& verify, std::span<const Trajectory> samples) {
  std::size_t ok = 0;
  for (const auto& s : samples) ok += verify(s) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

inline double pass_of(const Verifier& verify, std::span<const Trajectory> samples) {
  return std::any_of(samples.begin(), samples.end(), [&](const Trajectory& s) { return verify(s); }) ? 1.0 : 0.0;
}

/// Majority vote over final answers; ties and missing answers count as incorrect.
inline double maj_of(const Verifier& verify, std::span<const Trajectory> samples) {
  std::map<std::vector<TokenId>, std::size_t> votes;
  for (const auto& s : samples)
    if (auto a = verify.answer_of(s)) ++votes[*a];
  if (votes.empty()) return 0.0;
  std::size_t best = 0, n_best = 0;
  const std::vector<TokenId>* winner = nullptr;
  for (const auto& [answer, n] : votes) {
    if (n > best) {
      best = n;
      n_best = 1;
      winner = &answer;
    } else if (n == best) {
      ++n_best;
    }
  }
  if (n_best > 1) return 0.0;
  return *winner == verify.target(samples.front().prompt) ? 1.0 : 0.0;
}

inline double avg_at_k(const PolicyParams& params, const Task& task, PromptId prompt, std::size_t k,
                       const RngStream& rng, double temperature = 1.0) {
  return avg_of(task.verifier, sample_completions(params, task.spec, prompt, k, rng, temperature));
}

inline double pass_at_k(const PolicyParams& params, const Task& task, PromptId prompt, std::size_t k,
                        const RngStream& rng, double temperature = 1.0) {
  return pass_of(task.verifier, sample_completions(params, task.spec, prompt, k, rng, temperature));
}

inline double maj_at_k(const PolicyParams& params, const Task& task, PromptId prompt, std::size_t k,
                       const RngStream& rng, double temperature = 1.0) {
  return maj_of(task.verifier, sample_completions(params, task.spec, prompt, k, rng, temperature));
}

/// Means over every prompt of the task. Prompt p draws from RngStream(seed).split({eval, p}).
inline EvalMetrics evaluate(const PolicyParams& params, const Task& task, std::size_t k, std::uint64_t seed,
                            double temperature = 1.0, std::size_t workers = 1) {
  const std::size_t n = task.spec.size();
  std::vector<EvalMetrics> per(n);
  const RngStream base = RngStream(seed).split(tag_of("eval"));
  parallel_for(n, workers, [&](std::size_t p) {
    const auto samples = sample_completions(params, task.spec, static_cast<PromptId>(p), k, base.split(p), temperature);
    per[p] = {avg_of(task.verifier, samples), pass_of(task.verifier, samples), maj_of(task.verifier, samples)};
  });
  EvalMetrics m;
  for (const auto& e : per) {
    m.avg_at_k += e.avg_at_k;
    m.pass_at_k += e.pass_at_k;
    m.maj_at_k += e.maj_at_k;
  }
  const double d = static_cast<double>(n);
  m.avg_at_k /= d;
  m.pass_at_k /= d;
  m.maj_at_k /= d;
  return m;
}

// ---------------------------------------------------------------------------
// Histograms

/// Bins [edges[i], edges[i+1]); values outside the edge range are tallied
/// as underflow / overflow.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  void add(double x) {
    if (x < edges.front()) {
      ++underflow;
    } else if (x >= edges.back()) {
      ++overflow;
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), x);
      ++counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), underflow + overflow); }

  /// Tally of underflow plus every bin lying entirely at or below x.
  std::size_t mass_below(double x) const {
    std::size_t n = underflow;
    for (std::size_t i = 0; i < counts.size(); ++i)
      if (edges[i + 1] <= x) n += counts[i];
    return n;
  }

  bool operator==(const Histogram&) const = default;
};

/// Signed logarithmic axis: |R| in [min_abs, max_abs] with bins_per_decade
/// bins per decade on each side, plus one near-zero bin (-min_abs, min_abs).
struct LogBinSpec {
  double min_abs = 1e-3;
  double max_abs = 1e3;
  std::size_t bins_per_decade = 10;
};

inline Histogram make_signed_log_histogram(const LogBinSpec& spec) {
  if (!(spec.min_abs > 0.0 && spec.max_abs > spec.min_abs) || spec.bins_per_decade < 1)
    throw DomainError("invalid log-bin specification");
  const double lo = std::log10(spec.min_abs), hi = std::log10(spec.max_abs);
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) * static_cast<double>(spec.bins_per_decade)));
  std::vector<double> mags;
  for (std::size_t i = 0; i <= n; ++i)
    mags.push_back(std::pow(10.0, lo + static_cast<double>(i) / static_cast<double>(spec.bins_per_decade)));
  Histogram h;
  for (auto it = mags.rbegin(); it != mags.rend(); ++it) h.edges.push_back(-*it);
  for (double m : mags) h.edges.push_back(m);
  h.counts.assign(h.edges.size() - 1, 0);
  return h;
}

inline Histogram reward_histogram(std::span<const double> rewards, const LogBinSpec& spec = {}) {
  Histogram h = make_signed_log_histogram(spec);
  for (double r : rewards) h.add(r);
  return h;
}

inline Histogram reward_histogram(const RolloutBatch& batch, const LogBinSpec& spec = {}) {
  Histogram h = make_signed_log_histogram(spec);
  batch.for_each_record([&](const TokenRecord& r) { h.add(r.reward_raw); });
  return h;
}

// ---------------------------------------------------------------------------
// Entropy-percentile buckets

struct BucketSummary {
  double lower_pct = 0.0;
  double upper_pct = 0.0;
  std::size_t count = 0;
  double entropy_min = 0.0;
  double entropy_max = 0.0;
  double median_abs_reward = 0.0;
  double mean_abs_reward = 0.0;
};

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Partitions tokens by entropy rank (ascending, ties by input order) at the
/// given percentile cut points and summarises |R| per bucket.
inline std::vector<BucketSummary> entropy_reward_buckets(std::span<const double> entropies,
                                                         std::span<const double> rewards,
                                                         std::vector<double> cuts = {0.6, 0.8}) {
  if (entropies.size() != rewards.size()) throw DomainError("entropy/reward length mismatch");
  const std::size_t n = entropies.size();
  if (n == 0) return {};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return entropies[a] < entropies[b]; });

  std::vector<double> bounds{0.0};
  bounds.insert(bounds.end(), cuts.begin(), cuts.end());
  bounds.push_back(1.0);
  std::vector<BucketSummary> out;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    const auto from = static_cast<std::size_t>(std::floor(bounds[b] * static_cast<double>(n) + 1e-9));
    const auto to = b + 2 == bounds.size() ? n : static_cast<std::size_t>(std::floor(bounds[b + 1] * static_cast<double>(n) + 1e-9));
    BucketSummary s;
    s.lower_pct = 100.0 * bounds[b];
    s.upper_pct = 100.0 * bounds[b + 1];
    std::vector<double> abs_r;
    for (std::size_t i = from; i < to; ++i) abs_r.push_back(std::abs(rewards[order[i]]));
    s.count = abs_r.size();
    if (!abs_r.empty()) {
      s.entropy_min = entropies[order[from]];
      s.entropy_max = entropies[order[to - 1]];
      s.mean_abs_reward = std::accumulate(abs_r.begin(), abs_r.end(), 0.0) / static_cast<double>(abs_r.size());
      s.median_abs_reward = median_of(std::move(abs_r));
    }
    out.push_back(s);
  }
  return out;
}

inline std::vector<BucketSummary> entropy_reward_buckets(const RolloutBatch& batch, std::vector<double> cuts = {0.6, 0.8}) {
  std::vector<double> h, r;
  batch.for_each_record([&](const TokenRecord& rec) {
    h.push_back(rec.entropy);
    r.push_back(rec.reward_raw);
  });
  return entropy_reward_buckets(h, r, std::move(cuts));
}

// ---------------------------------------------------------------------------
// Run log

struct StepRecord {
  std::size_t step = 0;
  Phase phase = Phase::exploration;
  double objective = 0.0;
  double grad_norm = 0.0;
  double mean_entropy = 0.0;
  double mask_fraction = 0.0;
  double clipped_fraction = 0.0;
  std::optional<double> exact_rkl;
  std::optional<EvalMetrics> eval;
  // Extra telemetry; only in the structured stream.
  double ratio_clipped_fraction = 0.0;
  std::optional<double> tau;
  std::size_t token_count = 0;
  std::size_t kept_tokens = 0;
  bool skipped = false;
};

class RunLog {
 public:
  void append(StepRecord r) {
    if (!steps_.empty() && r.step <= steps_.back().step) throw DomainError("run log steps must strictly increase");
    steps_.push_back(std::move(r));
  }

  const std::vector<StepRecord>& steps() const noexcept { return steps_; }
  bool empty() const noexcept { return steps_.empty(); }

  std::optional<EvalMetrics> initial_eval;  // after warm start, before step 1

 private:
  std::vector<StepRecord> steps_;
};

inline constexpr std::array<std::string_view, 11> kMetricsColumns = {
    "step",          "phase",     "objective", "grad_norm", "mean_entropy", "mask_fraction",
    "clipped_fraction", "exact_rkl", "avg_at_k", "pass_at_k", "maj_at_k"};

inline std::string metrics_csv(const RunLog& log) {
  std::string out;
  for (std::size_t i = 0; i < kMetricsColumns.size(); ++i) {
    if (i) out += ',';
    out += kMetricsColumns[i];
  }
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : log.steps()) {
    out += std::to_string(r.step) + ',' + std::string(to_string(r.phase)) + ',' + format_double(r.objective) + ',' +
           format_double(r.grad_norm) + ',' + format_double(r.mean_entropy) + ',' + format_double(r.mask_fraction) +
           ',' + format_double(r.clipped_fraction) + ',' + opt(r.exact_rkl) + ',' +
           opt(r.eval ? std::optional(r.eval->avg_at_k) : std::nullopt) + ',' +
           opt(r.eval ? std::optional(r.eval->pass_at_k) : std::nullopt) + ',' +
           opt(r.eval ? std::optional(r.eval->maj_at_k) : std::nullopt) + '\n';
  }
  return out;
}

inline nlohmann::ordered_json to_json(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["phase"] = std::string(to_string(r.phase));
  j["objective"] = r.objective;
  j["grad_norm"] = r.grad_norm;
  j["mean_entropy"] = r.mean_entropy;
  j["mask_fraction"] = r.mask_fraction;
  j["clipped_fraction"] = r.clipped_fraction;
  j["ratio_clipped_fraction"] = r.ratio_clipped_fraction;
  j["token_count"] = r.token_count;
  j["kept_tokens"] = r.kept_tokens;
  j["skipped"] = r.skipped;
  j["tau_beta"] = r.tau ? nlohmann::ordered_json(*r.tau) : nlohmann::ordered_json(nullptr);
  j["exact_rkl"] = r.exact_rkl ? nlohmann::ordered_json(*r.exact_rkl) : nlohmann::ordered_json(nullptr);
  if (r.eval) {
    j["avg_at_k"] = r.eval->avg_at_k;
    j["pass_at_k"] = r.eval->pass_at_k;
    j["maj_at_k"] = r.eval->maj_at_k;
  }
  return j;
}

inline std::string metrics_ndjson(const RunLog& log) {
  std::string out;
  for (const auto& r : log.steps()) out += to_json(r).dump() + '\n';
  return out;
}

/// Writes dir/metrics.csv and dir/metrics.ndjson.
inline void write_run_log(const RunLog& log, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_file((dir / "metrics.csv").string(), metrics_csv(log));
  write_file((dir / "metrics.ndjson").string(), metrics_ndjson(log));
}

// ---------------------------------------------------------------------------
// Token traces

/// Externally ingestible per-token record; log-probabilities in nats.
struct TraceRecord {
  std::string run_id;
  std::uint64_t prompt_id = 0;
  std::uint64_t position = 0;
  std::uint64_t token_id = 0;
  double logp_student = 0.0;
  double logp_teacher = 0.0;
  double entropy = 0.0;

  double reward() const { return logp_teacher - logp_student; }
  bool operator==(const TraceRecord&) const = default;
};

inline std::string trace_line(const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["prompt_id"] = r.prompt_id;
  j["position"] = r.position;
  j["token_id"] = r.token_id;
  j["logp_student"] = r.logp_student;
  j["logp_teacher"] = r.logp_teacher;
  j["entropy"] = r.entropy;
  return j.dump();
}

inline std::vector<TraceRecord> parse_trace(std::string_view text) {
  std::vector<TraceRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.run_id = j.at("run_id").get<std::string>();
      r.prompt_id = j.at("prompt_id").get<std::uint64_t>();
      r.position = j.at("position").get<std::uint64_t>();
      r.token_id = j.at("token_id").get<std::uint64_t>();
      r.logp_student = j.at("logp_student").get<double>();
      r.logp_teacher = j.at("logp_teacher").get<double>();
      r.entropy = j.at("entropy").get<double>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Trace lines for every token of a batch.
inline std::string trace_of(const RolloutBatch& batch, const std::string& run_id) {
  std::string out;
  for (const auto& ro : batch.rollouts) {
    for (std::size_t t = 0; t < ro.records.size(); ++t) {
      const auto& rec = ro.records[t];
      out += trace_line({run_id, ro.traj.prompt, t, ro.traj.tokens[t], rec.logp_old, rec.logp_teacher, rec.entropy});
      out += '\n';
    }
  }
  return out;
}

}  // namespace reldist
