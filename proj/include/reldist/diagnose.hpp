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
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "reldist/error.hpp"
#include "reldist/metrics.hpp"
#include "reldist/signal.hpp"
#include "reldist/text.hpp"

namespace reldist {

// ---------------------------------------------------------------------------
// Static plots

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline constexpr double kPlotW = 640, kPlotH = 400, kMargin = 56;
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

inline std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string num(double x) {
  std::ostringstream o;
  o.precision(4);
  o << x;
  return o.str();
}

inline void svg_frame(std::ostringstream& out, std::string_view title, double ylo, double yhi) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPlotW << "\" height=\"" << kPlotH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kPlotW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kPlotH - kMargin << "\" x2=\"" << kPlotW - kMargin / 2 << "\" y2=\""
      << kPlotH - kMargin << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin / 2 << "\" x2=\"" << kMargin << "\" y2=\"" << kPlotH - kMargin
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kMargin - 6 << "\" y=\"" << kPlotH - kMargin << "\" text-anchor=\"end\" font-size=\"11\">"
      << num(ylo) << "</text>\n"
      << "<text x=\"" << kMargin - 6 << "\" y=\"" << kMargin / 2 + 10 << "\" text-anchor=\"end\" font-size=\"11\">"
      << num(yhi) << "</text>\n";
}

inline std::pair<double, double> padded_range(double lo, double hi) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

}  // namespace detail

/// Bar chart with one labelled bar per value.
inline std::string svg_bars(std::string_view title, const std::vector<std::string>& labels,
                            const std::vector<double>& values) {
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  std::ostringstream out;
  detail::svg_frame(out, title, 0.0, hi);
  const double w = (detail::kPlotW - 1.5 * detail::kMargin) / std::max<std::size_t>(values.size(), 1);
  const double h = detail::kPlotH - 1.5 * detail::kMargin;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double bh = h * std::max(values[i], 0.0) / hi;
    const double x = detail::kMargin + static_cast<double>(i) * w;
    out << "<rect x=\"" << x + 0.1 * w << "\" y=\"" << detail::kPlotH - detail::kMargin - bh << "\" width=\"" << 0.8 * w
        << "\" height=\"" << bh << "\" fill=\"" << detail::kPalette[0] << "\"/>\n";
    if (i < labels.size() && values.size() <= 24)
      out << "<text x=\"" << x + 0.5 * w << "\" y=\"" << detail::kPlotH - detail::kMargin + 14
          << "\" text-anchor=\"middle\" font-size=\"9\">" << detail::esc(labels[i]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

/// Line chart; each series gets its own colour and a legend entry.
inline std::string svg_lines(std::string_view title, const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  std::tie(xlo, xhi) = detail::padded_range(xlo, xhi);
  std::tie(ylo, yhi) = detail::padded_range(ylo, yhi);
  std::ostringstream out;
  detail::svg_frame(out, title, ylo, yhi);
  const double w = detail::kPlotW - 1.5 * detail::kMargin, h = detail::kPlotH - 1.5 * detail::kMargin;
  auto px = [&](double x) { return detail::kMargin + w * (x - xlo) / (xhi - xlo); };
  auto py = [&](double y) { return detail::kPlotH - detail::kMargin - h * (y - ylo) / (yhi - ylo); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = detail::kPalette[k % std::size(detail::kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    out << "\"/>\n<text x=\"" << detail::kPlotW - detail::kMargin << "\" y=\"" << 44 + 14 * k
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << colour << "\">" << detail::esc(s.name) << "</text>\n";
  }
  out << "<text x=\"" << detail::kMargin << "\" y=\"" << detail::kPlotH - detail::kMargin + 14
      << "\" font-size=\"11\">" << detail::num(xlo) << "</text>\n"
      << "<text x=\"" << detail::kPlotW - detail::kMargin / 2 << "\" y=\"" << detail::kPlotH - detail::kMargin + 14
      << "\" text-anchor=\"end\" font-size=\"11\">" << detail::num(xhi) << "</text>\n</svg>\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Trace diagnostics

struct LambdaPoint {
  double lambda = 0.0;
  double floor = 0.0;
  std::size_t clipped = 0;
  std::size_t total = 0;
  double fraction() const { return total ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0; }
};

struct BetaPoint {
  double beta = 0.0;
  double tau = 0.0;
  std::size_t kept = 0;
  std::size_t total = 0;
  double coverage() const { return total ? static_cast<double>(kept) / static_cast<double>(total) : 0.0; }
};

struct Diagnostics {
  Histogram histogram;
  std::vector<BucketSummary> buckets;
  std::vector<LambdaPoint> lambda_sweep;
  std::vector<BetaPoint> beta_sweep;
};

inline const std::vector<double> kDefaultLambdaSweep{0.1, 0.3, 0.5, 0.7};
inline const std::vector<double> kDefaultBetaSweep{0.1, 0.2, 0.5, 1.0};

inline Diagnostics diagnose(const std::vector<TraceRecord>& trace, const std::vector<double>& lambdas = kDefaultLambdaSweep,
                            const std::vector<double>& betas = kDefaultBetaSweep, const LogBinSpec& bins = {}) {
  std::vector<double> rewards, entropies;
  rewards.reserve(trace.size());
  entropies.reserve(trace.size());
  for (const auto& r : trace) {
    rewards.push_back(r.reward());
    entropies.push_back(r.entropy);
  }
  Diagnostics d;
  d.histogram = reward_histogram(rewards, bins);
  if (trace.empty()) return d;
  d.buckets = entropy_reward_buckets(entropies, rewards);
  for (double lambda : lambdas) {
    LambdaPoint p{lambda, clip_floor(lambda), 0, rewards.size()};
    for (double r : rewards) p.clipped += r < p.floor ? 1 : 0;
    d.lambda_sweep.push_back(p);
  }
  for (double beta : betas) {
    BetaPoint p{beta, std::numeric_limits<double>::quiet_NaN(), 0, entropies.size()};
    if (!entropies.empty()) {
      p.tau = entropy_threshold(entropies, beta);
      for (double h : entropies) p.kept += refinement_mask(h, p.tau);
    }
    d.beta_sweep.push_back(p);
  }
  return d;
}

/// "lower,upper,count" rows, underflow first and overflow last.
inline std::string histogram_csv(const Histogram& h) {
  std::string out = "lower,upper,count\n";
  if (h.total() == 0) return out;
  out += "-inf," + format_double(h.edges.front()) + "," + std::to_string(h.underflow) + "\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += format_double(h.edges[i]) + "," + format_double(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
  out += format_double(h.edges.back()) + ",inf," + std::to_string(h.overflow) + "\n";
  return out;
}

inline std::string buckets_csv(const std::vector<BucketSummary>& buckets) {
  std::string out = "lower_pct,upper_pct,count,entropy_min,entropy_max,median_abs_reward,mean_abs_reward\n";
  for (const auto& b : buckets)
    out += format_double(b.lower_pct) + "," + format_double(b.upper_pct) + "," + std::to_string(b.count) + "," +
           format_double(b.entropy_min) + "," + format_double(b.entropy_max) + "," + format_double(b.median_abs_reward) +
           "," + format_double(b.mean_abs_reward) + "\n";
  return out;
}

inline std::string lambda_sweep_csv(const std::vector<LambdaPoint>& pts) {
  std::string out = "lambda,floor,clipped,total,clipped_fraction\n";
  for (const auto& p : pts)
    out += format_double(p.lambda) + "," + format_double(p.floor) + "," + std::to_string(p.clipped) + "," +
           std::to_string(p.total) + "," + format_double(p.fraction()) + "\n";
  return out;
}

inline std::string beta_sweep_csv(const std::vector<BetaPoint>& pts) {
  std::string out = "beta,tau,kept,total,coverage\n";
  for (const auto& p : pts)
    out += format_double(p.beta) + "," + (p.total ? format_double(p.tau) : std::string()) + "," +
           std::to_string(p.kept) + "," + std::to_string(p.total) + "," + format_double(p.coverage()) + "\n";
  return out;
}

/// Writes CSV reports and their SVG renderings into dir.
inline void write_diagnostics(const Diagnostics& d, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  auto put = [&](const char* name, const std::string& body) { write_file((dir / name).string(), body); };
  put("reward_histogram.csv", histogram_csv(d.histogram));
  put("entropy_buckets.csv", buckets_csv(d.buckets));
  put("lambda_sweep.csv", lambda_sweep_csv(d.lambda_sweep));
  put("beta_sweep.csv", beta_sweep_csv(d.beta_sweep));

  std::vector<std::string> labels{"<" + format_double(d.histogram.edges.front())};
  std::vector<double> counts{static_cast<double>(d.histogram.underflow)};
  for (std::size_t i = 0; i < d.histogram.counts.size(); ++i) {
    labels.push_back(format_double(d.histogram.edges[i]));
    counts.push_back(static_cast<double>(d.histogram.counts[i]));
  }
  labels.push_back(">" + format_double(d.histogram.edges.back()));
  counts.push_back(static_cast<double>(d.histogram.overflow));
  put("reward_histogram.svg", svg_bars("token reward histogram (signed log bins)", labels, counts));

  labels.clear();
  counts.clear();
  for (const auto& b : d.buckets) {
    labels.push_back(format_double(b.lower_pct) + "-" + format_double(b.upper_pct) + "%");
    counts.push_back(b.median_abs_reward);
  }
  put("entropy_buckets.svg", svg_bars("median |R| by entropy percentile", labels, counts));

  Series clip{"clipped fraction", {}, {}};
  for (const auto& p : d.lambda_sweep) {
    clip.x.push_back(p.lambda);
    clip.y.push_back(p.fraction());
  }
  put("lambda_sweep.svg", svg_lines("clipped-token fraction vs lambda", {clip}));
  Series cov{"mask coverage", {}, {}};
  for (const auto& p : d.beta_sweep) {
    cov.x.push_back(p.beta);
    cov.y.push_back(p.coverage());
  }
  put("beta_sweep.svg", svg_lines("mask coverage vs beta", {cov}));
}

/// Line plots of a run log: entropy, gradient norm and evaluation metrics.
inline void write_run_plots(const RunLog& log, const std::filesystem::path& dir) {
  Series entropy{"mean entropy", {}, {}}, grad{"grad norm", {}, {}}, avg{"avg@k", {}, {}}, pass{"pass@k", {}, {}};
  for (const auto& r : log.steps()) {
    const double k = static_cast<double>(r.step);
    entropy.x.push_back(k);
    entropy.y.push_back(r.mean_entropy);
    grad.x.push_back(k);
    grad.y.push_back(r.grad_norm);
    if (r.eval) {
      avg.x.push_back(k);
      avg.y.push_back(r.eval->avg_at_k);
      pass.x.push_back(k);
      pass.y.push_back(r.eval->pass_at_k);
    }
  }
  write_file((dir / "entropy.svg").string(), svg_lines("mean policy entropy", {entropy}));
  write_file((dir / "grad_norm.svg").string(), svg_lines("gradient norm", {grad}));
  if (!avg.x.empty()) write_file((dir / "eval.svg").string(), svg_lines("evaluation", {avg, pass}));
}

}  // namespace reldist
