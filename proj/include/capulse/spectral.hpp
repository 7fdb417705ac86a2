#pragma once

// FFT utilities, period discovery, frequency-band intervention and the
// periodicity-strength diagnostic.
//
// Convention: unnormalized forward transform, 1/n on the inverse. Period
// searches look only at the one-sided spectrum (bins 1..n/2) and never at DC.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "capulse/numeric.hpp"

namespace capulse::spectral {

using Complex = std::complex<double>;

namespace detail {

// The FFTW planner is not re-entrant; plans are created once per shape and
// executed through the new-array interface on caller-owned buffers.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan r2c(int n, int howmany) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(0, n, howmany);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<std::size_t>(n) * howmany);
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1) * howmany);
    // Column-major batch: transform j reads in[j*n ..], writes out[j*(n/2+1) ..].
    fftw_plan p = fftw_plan_many_dft_r2c(1, &n, howmany, in, nullptr, 1, n, out, nullptr, 1, n / 2 + 1,
                                         FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_[key] = p;
    return p;
  }

  fftw_plan c2c(int n, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(sign == FFTW_FORWARD ? 1 : 2, n, 1);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_complex* in = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_[key] = p;
    return p;
  }

  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void require_finite(std::span<const double> x, const char* op) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(std::string(op) + ": non-finite input");
}

}  // namespace detail

/// Full complex spectrum (n bins) of a real signal.
inline std::vector<Complex> forward_fft(std::span<const double> x) {
  if (x.empty()) throw Error("forward_fft: empty input");
  detail::require_finite(x, "forward_fft");
  const int n = static_cast<int>(x.size());
  std::vector<Complex> in(x.begin(), x.end());
  std::vector<Complex> out(x.size());
  fftw_plan p = detail::PlanCache::instance().c2c(n, FFTW_FORWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

/// Complex inverse with 1/n scaling.
inline std::vector<Complex> inverse_fft_complex(std::span<const Complex> spectrum) {
  if (spectrum.empty()) throw Error("inverse_fft: empty input");
  for (const auto& c : spectrum)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) throw Error("inverse_fft: non-finite input");
  const int n = static_cast<int>(spectrum.size());
  std::vector<Complex> in(spectrum.begin(), spectrum.end());
  std::vector<Complex> out(spectrum.size());
  fftw_plan p = detail::PlanCache::instance().c2c(n, FFTW_BACKWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  for (auto& c : out) c /= static_cast<double>(n);
  return out;
}

/// Real part of the inverse transform.
inline std::vector<double> inverse_fft(std::span<const Complex> spectrum) {
  auto c = inverse_fft_complex(spectrum);
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

/// Amplitudes averaged over the columns of a [n x C] matrix, one-sided:
/// index f in [0, n/2] holds mean_c |FFT(col_c)_f|.
inline std::vector<double> mean_amplitudes(const numeric::Tensor& x) {
  const std::size_t n = x.rows(), C = x.cols();
  if (n == 0 || C == 0) throw Error("mean_amplitudes: empty input");
  detail::require_finite(x.data(), "mean_amplitudes");
  const std::size_t half = n / 2 + 1;
  std::vector<double> cols(n * C);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < C; ++c) cols[c * n + t] = x[t * C + c];
  std::vector<Complex> out(half * C);
  fftw_plan p = detail::PlanCache::instance().r2c(static_cast<int>(n), static_cast<int>(C));
  fftw_execute_dft_r2c(p, cols.data(), reinterpret_cast<fftw_complex*>(out.data()));
  std::vector<double> amp(half, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t f = 0; f < half; ++f) amp[f] += std::abs(out[c * half + f]);
  for (auto& a : amp) a /= static_cast<double>(C);
  return amp;
}

inline std::size_t period_of(std::size_t length, std::size_t freq) { return (length + freq - 1) / freq; }

/// Global period: argmax of the channel-averaged amplitude over bins
/// 1..n/2, ties to the lower bin; returns ceil(n / f_g).
inline std::size_t discover_global_period(const numeric::Tensor& values) {
  const std::size_t n = values.rows(), C = values.cols();
  if (n < 4) throw Error("discover_global_period: need at least 4 samples");
  bool varies = false;
  for (std::size_t c = 0; c < C && !varies; ++c)
    for (std::size_t t = 1; t < n; ++t)
      if (values[t * C + c] != values[c]) {
        varies = true;
        break;
      }
  if (!varies) throw Error("discover_global_period: series is constant, no dominant frequency");
  const auto amp = mean_amplitudes(values);
  std::size_t best = 1;
  for (std::size_t f = 2; f <= n / 2; ++f)
    if (amp[f] > amp[best]) best = f;
  return period_of(n, best);
}

struct PeriodSet {
  std::vector<std::size_t> frequencies;
  std::vector<std::size_t> periods;
  std::vector<double> weights;
  bool short_count = false;

  std::size_t size() const { return frequencies.size(); }
};

/// The k strongest bins among 1..T/2 of the channel-averaged spectrum of
/// `x` [T x C]. Fewer than k usable (nonzero) bins sets `short_count`.
inline PeriodSet top_k_periods(const numeric::Tensor& x, std::size_t k) {
  const std::size_t T = x.rows();
  if (k < 1) throw Error("top_k_periods: k must be >= 1");
  if (T < 2) throw Error("top_k_periods: need at least 2 samples");
  const auto amp = mean_amplitudes(x);
  double peak = 0.0;
  for (std::size_t f = 1; f <= T / 2; ++f) peak = std::max(peak, amp[f]);
  std::vector<std::size_t> order;
  for (std::size_t f = 1; f <= T / 2; ++f)
    if (peak > 0.0 && amp[f] > 1e-12 * peak) order.push_back(f);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return amp[a] > amp[b]; });
  PeriodSet out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    out.frequencies.push_back(order[i]);
    out.periods.push_back(period_of(T, order[i]));
    out.weights.push_back(amp[order[i]]);
  }
  out.short_count = out.size() < k;
  return out;
}

enum class NoiseKind { gaussian, laplace };
enum class Band { high, low };

inline NoiseKind parse_noise(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "laplace") return NoiseKind::laplace;
  throw Error("unknown noise kind '" + s + "'");
}
inline std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "laplace"; }

inline Band parse_band(const std::string& s) {
  if (s == "high") return Band::high;
  if (s == "low") return Band::low;
  throw Error("unknown intervention location '" + s + "'");
}
inline std::string to_string(Band b) { return b == Band::high ? "high" : "low"; }

struct InterventionSpec {
  double k_h_frac = 0.25;
  double sigma = 0.1;
  NoiseKind noise = NoiseKind::gaussian;
  Band location = Band::high;
};

namespace detail {

template <typename Rng>
double draw(NoiseKind kind, double sigma, Rng& rng) {
  if (kind == NoiseKind::gaussian) return std::normal_distribution<double>(0.0, sigma)(rng);
  // Laplace with standard deviation sigma (scale sigma / sqrt 2).
  const double b = sigma / std::sqrt(2.0);
  const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  return -b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

}  // namespace detail

inline std::size_t high_band_start(std::size_t T, double k_h_frac) {
  return static_cast<std::size_t>(std::lround(k_h_frac * static_cast<double>(T)));
}

/// Add band-limited complex noise to each column's spectrum and return to
/// the time domain. A bin b belongs to the high band when its frequency
/// min(b, T-b) is at least k_h; noise on b and T-b is conjugate so the
/// output stays real. With sigma == 0 the input is returned unchanged.
template <typename Rng>
numeric::Tensor intervene(const numeric::Tensor& x, const InterventionSpec& spec, Rng& rng) {
  if (spec.sigma < 0.0) throw Error("intervene: sigma must be >= 0");
  if (!(spec.k_h_frac > 0.0 && spec.k_h_frac < 1.0)) throw Error("intervene: k_h_frac must lie in (0, 1)");
  detail::require_finite(x.data(), "intervene");
  if (spec.sigma == 0.0) return x;
  const std::size_t T = x.rows(), C = x.cols();
  const std::size_t kh = high_band_start(T, spec.k_h_frac);
  numeric::Tensor out(x.shape());
  std::vector<double> col(T);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) col[t] = x[t * C + c];
    auto F = forward_fft(col);
    for (std::size_t b = 0; b <= T / 2; ++b) {
      const bool high = b >= kh;
      if (high != (spec.location == Band::high)) continue;
      const std::size_t mirror = (T - b) % T;
      if (mirror == b) {
        F[b] += detail::draw(spec.noise, spec.sigma, rng);
      } else {
        const double re = detail::draw(spec.noise, spec.sigma, rng);
        const double im = detail::draw(spec.noise, spec.sigma, rng);
        F[b] += Complex(re, im);
        F[mirror] += Complex(re, -im);
      }
    }
    auto back = inverse_fft(F);
    for (std::size_t t = 0; t < T; ++t) out[t * C + c] = back[t];
  }
  return out;
}

/// Centered moving average of width `period` (2 x period when even); NaN
/// where the window does not fit.
inline std::vector<double> moving_average_trend(std::span<const double> x, std::size_t period) {
  const std::size_t n = x.size();
  std::vector<double> trend(n, std::nan(""));
  const std::size_t h = period / 2;
  for (std::size_t t = h; t + h < n; ++t) {
    double s = 0.0;
    if (period % 2 == 1) {
      for (std::size_t j = t - h; j <= t + h; ++j) s += x[j];
      trend[t] = s / static_cast<double>(period);
    } else {
      for (std::size_t j = t - h + 1; j < t + h; ++j) s += x[j];
      s += 0.5 * (x[t - h] + x[t + h]);
      trend[t] = s / static_cast<double>(period);
    }
  }
  return trend;
}

/// F_S = max(0, 1 - Var(R)/Var(S+R)) after a moving-average trend and
/// per-phase seasonal means.
inline double periodicity_strength(std::span<const double> x, std::size_t seasonal_period) {
  if (seasonal_period < 2) throw Error("periodicity_strength: period must be >= 2");
  if (x.size() < 2 * seasonal_period) throw Error("periodicity_strength: series shorter than two periods");
  detail::require_finite(x, "periodicity_strength");
  const auto trend = moving_average_trend(x, seasonal_period);
  std::vector<double> detr;
  std::vector<std::size_t> phase;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (std::isnan(trend[t])) continue;
    detr.push_back(x[t] - trend[t]);
    phase.push_back(t % seasonal_period);
  }
  std::vector<double> sums(seasonal_period, 0.0);
  std::vector<std::size_t> counts(seasonal_period, 0);
  for (std::size_t i = 0; i < detr.size(); ++i) {
    sums[phase[i]] += detr[i];
    ++counts[phase[i]];
  }
  std::vector<double> season(seasonal_period, 0.0);
  double level = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < seasonal_period; ++p)
    if (counts[p]) {
      season[p] = sums[p] / static_cast<double>(counts[p]);
      level += season[p];
      ++used;
    }
  if (used) level /= static_cast<double>(used);
  for (auto& s : season) s -= level;

  auto variance = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    return s / static_cast<double>(v.size());
  };
  std::vector<double> resid(detr.size());
  for (std::size_t i = 0; i < detr.size(); ++i) resid[i] = detr[i] - season[phase[i]];
  const double total = variance(detr);
  if (total < 1e-12) return 0.0;
  return std::max(0.0, 1.0 - variance(resid) / total);
}

}  // namespace capulse::spectral
