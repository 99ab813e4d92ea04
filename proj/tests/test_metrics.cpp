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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "reldist/diagnose.hpp"
#include "reldist/metrics.hpp"
#include "reldist/tasks.hpp"
#include "reldist/text.hpp"
#include "reldist/trainer.hpp"
#include "support.hpp"

namespace reldist {
namespace {

// n prompts whose only correct completion is eos; tokens a=0, b=1, bos=2, eos=3.
Task eos_task(std::size_t n, std::size_t max_len) {
  return make_task(TaskKind::copy_reverse, copy_reverse_vocabulary(2), std::vector<Prompt>(n), max_len);
}

// First token: eos with probability p_eos, otherwise a; after a, eos surely.
PolicyParams two_answer_policy(const Task& task, double p_eos) {
  PolicyParams p(StudentFamily::tabular, 1, task.spec.vocab, task.spec.size());
  const double root[] = {std::log(1.0 - p_eos), -80.0, -80.0, std::log(p_eos)};
  const double after_a[] = {-80.0, -80.0, -80.0, 0.0};
  const std::vector<TokenId> none, a{0};
  for (PromptId q = 0; q < task.spec.size(); ++q) {
    p.set_context_logits(q, none, root);
    p.set_context_logits(q, a, after_a);
  }
  return p;
}

Trajectory answer(std::vector<TokenId> tokens, bool terminated = true) {
  Trajectory t;
  t.tokens = std::move(tokens);
  t.terminated = terminated;
  return t;
}

// Random batch whose log-probabilities agree with its stored rewards.
RolloutBatch consistent_batch(std::uint64_t seed, std::size_t prompts, std::size_t group) {
  auto b = random_mask_batch(RngStream(seed), prompts, group);
  for (auto& ro : b.rollouts)
    for (auto& rec : ro.records) {
      rec.logp_old = -0.25;
      rec.logp_teacher = rec.reward_raw - 0.25;
      rec.reward_raw = rec.logp_teacher - rec.logp_old;
    }
  return b;
}

// P(X > k/2) for X ~ Binomial(k, p), k odd.
double majority_probability(std::size_t k, double p) {
  double s = 0.0;
  for (std::size_t i = k / 2 + 1; i <= k; ++i)
    s += std::exp(std::lgamma(k + 1.0) - std::lgamma(i + 1.0) - std::lgamma(k - i + 1.0) + i * std::log(p) +
                  (k - i) * std::log1p(-p));
  return s;
}

TEST(AvgAtK, CertainOutcomes) {
  const auto task = eos_task(4, 2);
  const RngStream rng(1);
  EXPECT_EQ(avg_at_k(two_answer_policy(task, 1.0), task, 0, 16, rng), 1.0);
  EXPECT_EQ(avg_at_k(two_answer_policy(task, 0.0), task, 0, 16, rng), 0.0);
}

TEST(AvgAtK, FairCoinConcentrates) {
  const auto task = eos_task(1, 2);
  EXPECT_NEAR(avg_at_k(two_answer_policy(task, 0.5), task, 0, 10000, RngStream(2)), 0.5, 0.015);
}

TEST(PassAtK, AtKOneEqualsAvg) {
  const auto task = eos_task(1, 2);
  const auto p = two_answer_policy(task, 0.5);
  for (std::uint64_t s = 0; s < 20; ++s)
    EXPECT_EQ(pass_at_k(p, task, 0, 1, RngStream(s)), avg_at_k(p, task, 0, 1, RngStream(s)));
}

TEST(PassAtK, MatchesOneMinusMissProbability) {
  const auto task = eos_task(2000, 2);
  const auto m = evaluate(two_answer_policy(task, 0.5), task, 10, 3);
  const double want = 1.0 - std::pow(0.5, 10), se = std::sqrt(want * (1.0 - want) / 2000.0);
  EXPECT_NEAR(m.pass_at_k, want, 4.0 * se);
}

TEST(MajAtK, VoteExamples) {
  const auto task = eos_task(1, 2);
  const auto& v = task.verifier;
  const auto ok = answer({3}), wrong = answer({0, 3}), other = answer({1, 3}), cut = answer({0, 0}, false);
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, ok, ok}), 1.0);
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, ok, wrong}), 1.0);
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, wrong, wrong}), 0.0);
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, wrong}), 0.0);            // tie
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, wrong, other}), 0.0);     // three-way tie
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{ok, cut, cut, cut}), 1.0);    // truncations carry no answer
  EXPECT_EQ(maj_of(v, std::vector<Trajectory>{cut, cut}), 0.0);
}

TEST(MajAtK, MatchesBinomialMajority) {
  const auto task = eos_task(2000, 2);
  const auto m = evaluate(two_answer_policy(task, 0.6), task, 101, 4, 1.0, 4);
  const double want = majority_probability(101, 0.6), se = std::sqrt(want * (1.0 - want) / 2000.0);
  EXPECT_NEAR(want, 0.979, 5e-4);
  EXPECT_NEAR(m.maj_at_k, want, 4.0 * se);
}

TEST(EvalMetrics, PassDominatesMajOnEverySampleSet) {
  const auto task = eos_task(1, 3);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto p = testing::random_policy(s, 4, StudentFamily::tabular, 1, 1, 2.0);
    const auto samples = sample_completions(p, task.spec, 0, 1 + s % 7, RngStream(s));
    const double avg = avg_of(task.verifier, samples), pass = pass_of(task.verifier, samples),
                 maj = maj_of(task.verifier, samples);
    EXPECT_GE(pass, maj);
    EXPECT_GE(pass, avg);
    if (samples.size() == 1) {
      EXPECT_EQ(avg, pass);
      EXPECT_EQ(avg, maj);
    }
  }
}

TEST(EvalMetrics, DeterministicAndWorkerInvariant) {
  TaskOptions opt;
  const auto task = build_task(TaskKind::mod_sum_chain, 3, 16, opt);
  const auto p = testing::random_policy(9, task.spec.vocab.size(), StudentFamily::ngram_bias, 2, 16);
  const auto a = evaluate(p, task, 8, 5), b = evaluate(p, task, 8, 5), c = evaluate(p, task, 8, 5, 1.0, 4);
  for (const auto& x : {b, c}) {
    EXPECT_TRUE(testing::same_bits(a.avg_at_k, x.avg_at_k));
    EXPECT_TRUE(testing::same_bits(a.pass_at_k, x.pass_at_k));
    EXPECT_TRUE(testing::same_bits(a.maj_at_k, x.maj_at_k));
  }
  EXPECT_THROW(evaluate(p, task, 0, 5), DomainError);
}

TEST(Histogram, SignedLogLayout) {
  const auto h = make_signed_log_histogram({});
  // 60 bins per side plus the near-zero bin.
  ASSERT_EQ(h.counts.size(), 121u);
  EXPECT_DOUBLE_EQ(h.edges.front(), -1e3);
  EXPECT_DOUBLE_EQ(h.edges.back(), 1e3);
  EXPECT_TRUE(std::is_sorted(h.edges.begin(), h.edges.end()));
  for (std::size_t i = 0; i < h.edges.size(); ++i) EXPECT_DOUBLE_EQ(h.edges[i], -h.edges[h.edges.size() - 1 - i]);
}

TEST(Histogram, ZeroRewardsLandInNearZeroBin) {
  const std::vector<double> zeros(500, 0.0);
  const auto h = reward_histogram(zeros);
  const auto mid = h.counts.size() / 2;
  EXPECT_DOUBLE_EQ(h.edges[mid], -1e-3);
  EXPECT_EQ(h.counts[mid], 500u);
  EXPECT_EQ(h.total(), 500u);
}

TEST(Histogram, ConservesCounts) {
  RngStream rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> r(1 + rng.below(3000));
    for (auto& x : r) x = std::sinh(8.0 * rng.normal());
    r.push_back(kNegInf);
    r.push_back(-kNegInf);
    const auto h = reward_histogram(r);
    EXPECT_EQ(h.total(), r.size());
    EXPECT_GE(h.underflow, 1u);
    EXPECT_GE(h.overflow, 1u);
    const auto n_below = static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double x) { return x < -40.0; }));
    EXPECT_LE(h.mass_below(-40.0), n_below);
  }
}

TEST(Histogram, BatchOverloadMatchesRewards) {
  const auto batch = random_mask_batch(RngStream(7), 3, 4);
  std::vector<double> r;
  batch.for_each_record([&](const TokenRecord& rec) { r.push_back(rec.reward_raw); });
  EXPECT_EQ(reward_histogram(batch), reward_histogram(r));
}

TEST(Buckets, ZeroRewardGivesZeroMedians) {
  RngStream rng(8);
  std::vector<double> h(1000), r(1000, 0.0);
  for (auto& x : h) x = rng.uniform();
  const auto b = entropy_reward_buckets(h, r);
  ASSERT_EQ(b.size(), 3u);
  for (const auto& s : b) {
    EXPECT_EQ(s.median_abs_reward, 0.0);
    EXPECT_EQ(s.mean_abs_reward, 0.0);
  }
  EXPECT_EQ(b[0].count + b[1].count + b[2].count, 1000u);
  EXPECT_EQ(b[0].count, 600u);
  EXPECT_EQ(b[2].count, 200u);
}

TEST(Buckets, RewardProportionalToEntropyIsOrdered) {
  RngStream rng(9);
  std::vector<double> h(1001), r(1001);
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = 3.0 * rng.uniform();
    r[i] = (i % 2 ? -1.0 : 1.0) * h[i];
  }
  const auto b = entropy_reward_buckets(h, r);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_LT(b[0].median_abs_reward, b[1].median_abs_reward);
  EXPECT_LT(b[1].median_abs_reward, b[2].median_abs_reward);
  EXPECT_LE(b[0].entropy_max, b[1].entropy_min);
  EXPECT_LE(b[1].entropy_max, b[2].entropy_min);
}

TEST(Buckets, MedianOracle) {
  EXPECT_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median_of({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(RunLogTest, EmptyLogWritesHeaderOnly) {
  const RunLog log;
  std::string header;
  for (std::size_t i = 0; i < kMetricsColumns.size(); ++i) header += (i ? "," : "") + std::string(kMetricsColumns[i]);
  EXPECT_EQ(metrics_csv(log), header + "\n");
  EXPECT_EQ(metrics_ndjson(log), "");
  const auto dir = testing::scratch_dir("empty_log");
  write_run_log(log, dir);
  EXPECT_EQ(read_file((dir / "metrics.csv").string()), header + "\n");
}

TEST(RunLogTest, RejectsNonIncreasingSteps) {
  RunLog log;
  StepRecord r;
  r.step = 2;
  log.append(r);
  EXPECT_THROW(log.append(r), DomainError);
}

RunConfig tiny_config() {
  RunConfig c;
  c.total_steps = 5;
  c.switch_step = 2;
  c.task_size = 8;
  c.batch_prompts = 4;
  c.warm_start_steps = 3;
  c.eval_every = 2;
  c.eval_k = 4;
  return c;
}

TEST(RunLogTest, CsvShapeAndByteDeterminism) {
  const auto a = train(tiny_config()), b = train(tiny_config());
  const auto csv = metrics_csv(a.log);
  EXPECT_EQ(csv, metrics_csv(b.log));
  EXPECT_EQ(metrics_ndjson(a.log), metrics_ndjson(b.log));
  std::size_t rows = 0, pos = 0;
  while (pos < csv.size()) {
    const auto nl = csv.find('\n', pos);
    const std::string line = csv.substr(pos, nl - pos);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), static_cast<long>(kMetricsColumns.size() - 1)) << line;
    ++rows;
    pos = nl + 1;
  }
  EXPECT_EQ(rows, 6u);
}

TEST(Trace, LineRoundTrip) {
  const auto batch = consistent_batch(10, 2, 3);
  const std::string text = trace_of(batch, "run-x");
  const auto recs = parse_trace(text);
  ASSERT_EQ(recs.size(), batch.token_count());
  std::string again;
  for (const auto& r : recs) again += trace_line(r) + "\n";
  EXPECT_EQ(again, text);
  std::size_t i = 0;
  batch.for_each_record([&](const TokenRecord& rec) {
    EXPECT_TRUE(testing::same_bits(recs[i].reward(), rec.reward_raw));
    EXPECT_TRUE(testing::same_bits(recs[i].entropy, rec.entropy));
    ++i;
  });
}

TEST(Trace, ParseErrorsNameTheLine) {
  const TraceRecord r{"run", 1, 2, 3, -0.5, -1.5, 0.7};
  const std::string good = trace_line(r);
  EXPECT_EQ(parse_trace("\n" + good + "\n\n").size(), 1u);
  try {
    parse_trace(good + "\n{\"run_id\": \"run\"}\n");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("trace line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_trace("not json\n"), IoError);
  EXPECT_TRUE(parse_trace("").empty());
}

TEST(Diagnose, GoldenTraceMatchesFrozenReports) {
  const std::filesystem::path fx = RELDIST_FIXTURE_DIR;
  const auto d = diagnose(parse_trace(read_file((fx / "golden_trace.ndjson").string())));
  EXPECT_EQ(histogram_csv(d.histogram), read_file((fx / "golden_reward_histogram.csv").string()));
  EXPECT_EQ(buckets_csv(d.buckets), read_file((fx / "golden_entropy_buckets.csv").string()));
  // The adversarial teacher puts some tokens far below -40.
  EXPECT_GT(d.histogram.mass_below(-40.0), 0u);
}

TEST(Diagnose, SweepsAreMonotone) {
  const auto batch = consistent_batch(11, 4, 8);
  const auto d = diagnose(parse_trace(trace_of(batch, "r")), {0.1, 0.3, 0.5, 0.7, 0.9}, {0.1, 0.2, 0.5, 1.0});
  for (std::size_t i = 1; i < d.lambda_sweep.size(); ++i)
    EXPECT_GE(d.lambda_sweep[i].clipped, d.lambda_sweep[i - 1].clipped);
  for (std::size_t i = 1; i < d.beta_sweep.size(); ++i) EXPECT_GE(d.beta_sweep[i].kept, d.beta_sweep[i - 1].kept);
  EXPECT_EQ(d.beta_sweep.back().kept, batch.token_count());
  std::vector<double> h;
  batch.for_each_record([&](const TokenRecord& r) { h.push_back(r.entropy); });
  for (const auto& p : d.beta_sweep) {
    EXPECT_GE(p.kept, top_fraction_count(p.beta, p.total)) << "beta " << p.beta;
    EXPECT_EQ(p.kept, static_cast<std::size_t>(std::count_if(h.begin(), h.end(), [&](double x) { return x >= p.tau; })));
  }
}

TEST(Diagnose, EmptyTraceGivesEmptyReports) {
  const auto d = diagnose({});
  EXPECT_EQ(d.histogram.total(), 0u);
  for (const auto& p : d.lambda_sweep) EXPECT_EQ(p.total, 0u);
  for (const auto& p : d.beta_sweep) EXPECT_EQ(p.kept, 0u);
  const auto dir = testing::scratch_dir("empty_diag");
  write_diagnostics(d, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "beta_sweep.csv"));
}

}  // namespace
}  // namespace reldist
