#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library's own numerical code paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capulse/numeric.hpp"

namespace oracle {

using capulse::numeric::ParamStore;
using capulse::numeric::Tape;
using capulse::numeric::Tensor;
using capulse::numeric::Var;

/// O(n^2) DFT, X_f = sum_t x_t exp(-2 pi i f t / n).
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t f = 0; f < n; ++f) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(f * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

/// Channel-averaged one-sided amplitude |X_f| for f = 0..n/2.
inline std::vector<double> naive_mean_amplitude(const Tensor& x) {
  const std::size_t n = x.rows(), C = x.cols();
  std::vector<double> amp(n / 2 + 1, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> col(n);
    for (std::size_t t = 0; t < n; ++t) col[t] = x(t, c);
    const auto F = naive_dft(col);
    for (std::size_t f = 0; f <= n / 2; ++f) amp[f] += std::abs(F[f]) / static_cast<double>(C);
  }
  return amp;
}

/// Pairwise AUROC: fraction of (positive, negative) pairs ordered correctly,
/// ties counted one half.
inline double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return hits / pairs;
}

/// Central-difference Jacobian of f: R^n -> R^m.
inline Eigen::MatrixXd fd_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                   std::vector<double> x, double h = 1e-6) {
  const auto y0 = f(x);
  Eigen::MatrixXd J(static_cast<long>(y0.size()), static_cast<long>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double keep = x[j];
    x[j] = keep + h;
    const auto yp = f(x);
    x[j] = keep - h;
    const auto ym = f(x);
    x[j] = keep;
    for (std::size_t i = 0; i < y0.size(); ++i) J(static_cast<long>(i), static_cast<long>(j)) = (yp[i] - ym[i]) / (2 * h);
  }
  return J;
}

struct GradReport {
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Relative error with a floor so that gradients that are zero up to
/// rounding do not blow the ratio up.
inline double rel_err(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compare the tape's parameter gradients of the scalar `loss(tape)` with
/// central differences. Up to `per_param` entries of each parameter are
/// probed, spread evenly over its storage; `only` restricts the check to
/// parameter names starting with that prefix. The relative error uses a
/// denominator floor of 1e-4 * max(1, |loss|): central differences carry
/// rounding noise proportional to |loss| / h, so gradients below the floor
/// are held to an absolute tolerance of 1e-8 * max(1, |loss|) instead.
inline GradReport check_param_grads(ParamStore& store, const std::function<Var(Tape&)>& loss,
                                    std::size_t per_param = 6, double h = 1e-6, const std::string& only = "") {
  store.zero_grad();
  double magnitude = 1.0;
  {
    Tape tape;
    Var l = loss(tape);
    magnitude = std::max(1.0, std::abs(l.item()));
    tape.backward(l);
  }
  const double floor = 1e-4 * magnitude;
  auto eval = [&] {
    Tape tape(false);
    return loss(tape).item();
  };
  GradReport rep;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    if (!only.empty() && p.name.rfind(only, 0) != 0) continue;
    const std::size_t n = p.value.size();
    const std::size_t count = std::min(per_param, n);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t idx = count == 1 ? 0 : c * (n - 1) / (count - 1);
      const double keep = p.value[idx];
      p.value[idx] = keep + h;
      const double up = eval();
      p.value[idx] = keep - h;
      const double down = eval();
      p.value[idx] = keep;
      const double numeric_grad = (up - down) / (2 * h);
      const double e = rel_err(p.grad[idx], numeric_grad, floor);
      ++rep.checked;
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst = p.name + "[" + std::to_string(idx) + "] analytic=" + std::to_string(p.grad[idx]) +
                    " numeric=" + std::to_string(numeric_grad);
      }
    }
  }
  store.zero_grad();
  return rep;
}

inline Tensor random_tensor(capulse::numeric::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.raw()) v = n(rng);
  return t;
}

}  // namespace oracle
