#pragma once

// Multi-periodic synthetic series with labelled anomaly injection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "capulse/series.hpp"

namespace capulse::synth {

struct PeriodComponent {
  double period = 20.0;
  double amplitude = 1.0;
};

enum class AnomalyKind { spike, level_shift, period_break };

inline AnomalyKind parse_kind(const std::string& s) {
  if (s == "spike") return AnomalyKind::spike;
  if (s == "level_shift") return AnomalyKind::level_shift;
  if (s == "period_break") return AnomalyKind::period_break;
  throw Error("unknown anomaly kind '" + s + "'");
}

inline std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::spike: return "spike";
    case AnomalyKind::level_shift: return "level_shift";
    case AnomalyKind::period_break: return "period_break";
  }
  return "?";
}

/// Spikes and level shifts add `magnitude` to every channel over the
/// interval. A period break swaps the first listed component's period for
/// `magnitude` over the interval, keeping its amplitude and phase offset.
struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::spike;
  std::size_t start = 0;
  std::size_t duration = 1;
  double magnitude = 1.0;
};

struct SynthConfig {
  std::size_t length = 2000;
  std::size_t dims = 1;
  std::vector<PeriodComponent> periods{{20.0, 1.0}};
  double noise_std = 0.0;
  std::vector<AnomalySpec> anomalies;
  std::uint64_t seed = 0;
};

struct Synthetic {
  MultivariateSeries series;
  std::vector<std::string> warnings;
};

inline Synthetic generate(const SynthConfig& cfg) {
  if (cfg.length < 1 || cfg.dims < 1) throw Error("synth: length and dims must be positive");
  if (cfg.periods.empty()) throw Error("synth: at least one period component is required");
  for (const auto& p : cfg.periods)
    if (p.period < 2) throw Error("synth: periods must be >= 2");
  for (const auto& a : cfg.anomalies) {
    if (a.duration < 1 || a.start + a.duration > cfg.length)
      throw Error("synth: anomaly interval [" + std::to_string(a.start) + ", " + std::to_string(a.start + a.duration) +
                  ") outside the series");
    if (a.kind == AnomalyKind::period_break && a.magnitude < 2)
      throw Error("synth: period_break needs a replacement period >= 2");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = cfg.length, D = cfg.dims;
  std::vector<double> phases(D * cfg.periods.size());
  for (auto& p : phases) p = phase(rng);

  // Replacement period of the first component at each timestep.
  std::vector<double> first_period(n, cfg.periods[0].period);
  std::vector<double> offset(n, 0.0);
  Synthetic out;
  std::vector<int> labels(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> intervals;
  for (const auto& a : cfg.anomalies) {
    for (std::size_t t = a.start; t < a.start + a.duration; ++t) {
      if (a.kind == AnomalyKind::period_break)
        first_period[t] = a.magnitude;
      else
        offset[t] += a.magnitude;
      labels[t] = 1;
    }
    for (const auto& [s, e] : intervals)
      if (a.start < e && s < a.start + a.duration)
        out.warnings.push_back("anomaly at " + std::to_string(a.start) + " overlaps [" + std::to_string(s) + ", " +
                               std::to_string(e) + "); intervals merged");
    intervals.emplace_back(a.start, a.start + a.duration);
  }

  numeric::Tensor values({n, D});
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    for (std::size_t d = 0; d < D; ++d) {
      double v = 0.0;
      for (std::size_t i = 0; i < cfg.periods.size(); ++i) {
        const double period = i == 0 ? first_period[t] : cfg.periods[i].period;
        v += cfg.periods[i].amplitude * std::sin(2.0 * std::numbers::pi * tt / period + phases[d * cfg.periods.size() + i]);
      }
      values[t * D + d] = v + offset[t];
    }
  }
  if (cfg.noise_std > 0)
    for (auto& v : values.raw()) v += cfg.noise_std * noise(rng);

  auto& s = out.series;
  s.values = std::move(values);
  s.timestamps.resize(n);
  for (std::size_t t = 0; t < n; ++t) s.timestamps[t] = static_cast<double>(t);
  s.labels = std::move(labels);
  for (std::size_t d = 0; d < D; ++d) s.dim_names.push_back("x" + std::to_string(d));
  return out;
}

}  // namespace capulse::synth
