#pragma once

// End-to-end helpers. The global period is discovered on the training split
// after standardization; scores are mapped back to single timesteps.

#include <cstddef>
#include <optional>
#include <vector>

#include "capulse/eval.hpp"
#include "capulse/model.hpp"
#include "capulse/series.hpp"
#include "capulse/spectral.hpp"
#include "capulse/trainer.hpp"

namespace capulse {

struct PreparedData {
  MultivariateSeries series;  // standardized when requested
  Standardization standardization;
  SplitBounds bounds;
  std::size_t global_period = 0;
};

inline PreparedData prepare(const MultivariateSeries& raw, const SplitSpec& split = {}, bool standardize_data = true) {
  raw.validate();
  PreparedData p;
  p.bounds = split_bounds(raw.length(), split);
  if (standardize_data) {
    auto [s, st] = standardize(raw, split);
    p.series = std::move(s);
    p.standardization = std::move(st);
  } else {
    p.series = raw;
    p.standardization.mean.assign(raw.dims(), 0.0);
    p.standardization.stddev.assign(raw.dims(), 1.0);
  }
  p.global_period = spectral::discover_global_period(p.series.slice(0, p.bounds.train_end).values);
  return p;
}

struct TrainedRun {
  Model model;
  FitResult fit;
  PreparedData data;
};

inline TrainedRun train_on_series(const MultivariateSeries& raw, const TrainConfig& cfg, const SplitSpec& split = {},
                                  bool standardize_data = true, const EpochCallback& on_epoch = {}) {
  TrainedRun run{Model{}, FitResult{}, prepare(raw, split, standardize_data)};
  run.model = init_model(cfg, raw.dims(), run.data.global_period);
  run.model.standardization = run.data.standardization;
  const auto& b = run.data.bounds;
  const auto train = make_windows(run.data.series.slice(0, b.train_end), cfg.window, cfg.stride);
  const auto val = make_windows(run.data.series.slice(b.train_end, b.val_end), cfg.window, cfg.stride);
  run.fit = fit(run.model, train, val, on_epoch);
  return run;
}

struct PointScores {
  eval::AnomalyScoreSeries points;
  std::vector<eval::PeriodDiagnostic> diagnostics;
};

/// Score an already standardized [n x D] matrix with stride-`stride`
/// windows and align the per-timestep scores back to its timeline.
inline PointScores score_points(Model& m, const numeric::Tensor& values, std::size_t stride = 1,
                                eval::Aggregation agg = eval::Aggregation::mean) {
  const auto batch = make_windows(values, m.config.window, stride);
  std::vector<std::vector<double>> per_window;
  PointScores out;
  per_window.reserve(batch.size());
  for (std::size_t w = 0; w < batch.size(); ++w) {
    auto s = score_window(m, batch.windows[w]);
    for (std::size_t r = 0; r < s.periods.size(); ++r)
      out.diagnostics.push_back({batch.starts[w], r, s.periods.periods[r], s.amplitude_weight[r], s.attention[r]});
    per_window.push_back(std::move(s.tau_t));
  }
  out.points = eval::window_scores_to_points(per_window, batch.starts, values.rows(), agg);
  return out;
}

}  // namespace capulse
