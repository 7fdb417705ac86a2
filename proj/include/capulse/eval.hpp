#pragma once

// Pointwise score alignment, ranking metrics and report writers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capulse/numeric.hpp"

namespace capulse::eval {

struct AnomalyScoreSeries {
  std::vector<double> scores;
  std::vector<std::size_t> coverage;
};

enum class Aggregation { mean, max };

/// Spread per-timestep window scores back onto the source timeline.
/// Timesteps no window covers take the nearest covered score (coverage 0).
inline AnomalyScoreSeries window_scores_to_points(const std::vector<std::vector<double>>& per_window,
                                                  const std::vector<std::size_t>& starts, std::size_t length,
                                                  Aggregation agg = Aggregation::mean) {
  if (per_window.size() != starts.size()) throw Error("window_scores_to_points: starts/windows size mismatch");
  AnomalyScoreSeries out;
  out.scores.assign(length, agg == Aggregation::mean ? 0.0 : -std::numeric_limits<double>::infinity());
  out.coverage.assign(length, 0);
  for (std::size_t w = 0; w < per_window.size(); ++w)
    for (std::size_t j = 0; j < per_window[w].size(); ++j) {
      const std::size_t t = starts[w] + j;
      if (t >= length) throw Error("window_scores_to_points: window extends past series end");
      if (agg == Aggregation::mean)
        out.scores[t] += per_window[w][j];
      else
        out.scores[t] = std::max(out.scores[t], per_window[w][j]);
      ++out.coverage[t];
    }
  long first = -1, last = -1;
  for (std::size_t t = 0; t < length; ++t)
    if (out.coverage[t]) {
      if (first < 0) first = static_cast<long>(t);
      last = static_cast<long>(t);
      if (agg == Aggregation::mean) out.scores[t] /= static_cast<double>(out.coverage[t]);
    }
  if (first < 0) throw Error("window_scores_to_points: no timestep is covered");
  for (std::size_t t = 0; t < static_cast<std::size_t>(first); ++t) out.scores[t] = out.scores[first];
  for (std::size_t t = static_cast<std::size_t>(last) + 1; t < length; ++t) out.scores[t] = out.scores[last];
  // Interior gaps (stride > window) take the closer neighbour.
  long prev = first;
  for (long t = first + 1; t <= last; ++t) {
    if (out.coverage[static_cast<std::size_t>(t)]) {
      prev = t;
      continue;
    }
    long next = t;
    while (!out.coverage[static_cast<std::size_t>(next)]) ++next;
    out.scores[static_cast<std::size_t>(t)] = (t - prev <= next - t) ? out.scores[static_cast<std::size_t>(prev)]
                                                                     : out.scores[static_cast<std::size_t>(next)];
  }
  return out;
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half; midrank Mann-Whitney statistic.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_sum += midrank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error("auroc: labels must contain both classes");
  const double u = pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// AUROC restricted to each named split; splits holding one class only are
/// reported as null.
inline nlohmann::json auroc_by_split(std::span<const double> scores, std::span<const int> labels,
                                     const std::vector<std::string>& split) {
  nlohmann::json out = nlohmann::json::object();
  std::vector<std::string> names;
  for (const auto& s : split)
    if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);
  for (const auto& name : names) {
    std::vector<double> sc;
    std::vector<int> lb;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == name) {
        sc.push_back(scores[i]);
        lb.push_back(labels[i]);
      }
    const auto pos = std::count(lb.begin(), lb.end(), 1);
    out[name] = (pos > 0 && pos < static_cast<long>(lb.size())) ? nlohmann::json(auroc(sc, lb)) : nlohmann::json(nullptr);
  }
  return out;
}

/// One row of the per-window period diagnostics export.
struct PeriodDiagnostic {
  std::size_t window_start = 0;
  std::size_t rank = 0;
  std::size_t period = 0;
  double amplitude_weight = 0.0;
  double attention = 0.0;
};

struct ReportInput {
  std::vector<double> timestamps;
  AnomalyScoreSeries scores;
  std::optional<std::vector<int>> labels;
  std::vector<PeriodDiagnostic> diagnostics;
  std::vector<std::string> split;  // optional per-point split name
  nlohmann::json metadata = nlohmann::json::object();
  std::size_t histogram_bins = 50;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t normal = 0;
  std::size_t anomaly = 0;
};

inline std::vector<HistogramBin> histogram(std::span<const double> scores, const std::optional<std::vector<int>>& labels,
                                           std::size_t bins) {
  if (scores.empty() || bins == 0) throw Error("histogram: empty input");
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto b = static_cast<std::size_t>((scores[i] - lo) / width);
    b = std::min(b, bins - 1);
    if (labels && (*labels)[i] == 1)
      ++out[b].anomaly;
    else
      ++out[b].normal;
  }
  return out;
}

/// Writes histogram.csv, scores.csv, periods.csv and summary.json into
/// `dir`; returns the summary document.
inline nlohmann::json emit_reports(const std::string& dir, const ReportInput& in) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::size_t n = in.scores.scores.size();
  if (in.timestamps.size() != n) throw Error("emit_reports: timestamp count does not match scores");
  if (in.labels && in.labels->size() != n) throw Error("emit_reports: label count does not match scores");
  if (!in.split.empty() && in.split.size() != n) throw Error("emit_reports: split count does not match scores");

  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw Error("cannot write '" + (fs::path(dir) / name).string() + "'");
    f << std::setprecision(17);
    return f;
  };

  {
    auto f = open("histogram.csv");
    const auto h = histogram(in.scores.scores, in.labels, in.histogram_bins);
    f << (in.labels ? "bin_lo,bin_hi,normal,anomaly\n" : "bin_lo,bin_hi,count\n");
    for (const auto& b : h) {
      f << b.lo << ',' << b.hi << ',' << b.normal;
      if (in.labels) f << ',' << b.anomaly;
      f << '\n';
    }
  }
  {
    auto f = open("scores.csv");
    f << "timestamp,score,log_likelihood,coverage" << (in.split.empty() ? "" : ",split") << (in.labels ? ",label" : "")
      << '\n';
    for (std::size_t t = 0; t < n; ++t) {
      f << in.timestamps[t] << ',' << in.scores.scores[t] << ',' << -in.scores.scores[t] << ','
        << in.scores.coverage[t];
      if (!in.split.empty()) f << ',' << in.split[t];
      if (in.labels) f << ',' << (*in.labels)[t];
      f << '\n';
    }
  }
  {
    auto f = open("periods.csv");
    f << "window_start,rank,period,amplitude_weight,attention\n";
    for (const auto& d : in.diagnostics)
      f << d.window_start << ',' << d.rank << ',' << d.period << ',' << d.amplitude_weight << ',' << d.attention
        << '\n';
  }
  nlohmann::json summary = in.metadata;
  summary["points"] = n;
  if (in.labels) {
    const auto pos = static_cast<std::size_t>(std::count(in.labels->begin(), in.labels->end(), 1));
    summary["anomalies"] = pos;
    if (pos > 0 && pos < n) summary["auroc"] = auroc(in.scores.scores, *in.labels);
    if (!in.split.empty()) summary["auroc_by_split"] = auroc_by_split(in.scores.scores, *in.labels, in.split);
  }
  {
    auto f = open("summary.json");
    f << summary.dump(2) << '\n';
  }
  return summary;
}

}  // namespace capulse::eval
