#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "capulse/penf.hpp"
#include "oracles.hpp"

using namespace capulse;
namespace nm = capulse::numeric;
using nm::Tensor;
using nm::Var;

namespace {

struct Flow {
  penf::FlowConfig cfg;
  nm::ParamStore store;
  PCMask mask;
  Tensor hc;

  // `out_scale` > 0 replaces the zero-initialised output layers with random
  // values so that the flow is not the identity.
  Flow(std::size_t T, std::size_t D, long period, std::uint64_t seed, double out_scale = 0.3,
       std::size_t layers = 2)
      : cfg{D, 6, 3, layers, 2, 5.0}, mask(PCMask::build(period, T, D)) {
    nm::Rng rng(seed);
    penf::init_params(store, cfg, rng);
    std::mt19937_64 r(seed + 7);
    if (out_scale > 0)
      for (std::size_t i = 0; i < store.size(); ++i) {
        auto& p = store.at(i);
        if (p.name.find(".out.") != std::string::npos)
          for (auto& v : p.value.raw()) v = std::normal_distribution<double>(0, out_scale)(r);
      }
    hc = oracle::random_tensor({T, cfg.hidden_dim}, r, 0.5);
  }

  penf::FlowOutput forward(nm::Tape& tape, const Tensor& x) {
    return penf::forward(tape, store, tape.constant(x), tape.constant(hc), mask, cfg);
  }
  Tensor z(const Tensor& x) {
    nm::Tape tape(false);
    return forward(tape, x).z.value();
  }
  double logdet(const Tensor& x) {
    nm::Tape tape(false);
    return forward(tape, x).logdet.item();
  }
  double log_prob(const Tensor& x) {
    nm::Tape tape(false);
    return penf::log_prob(forward(tape, x)).item();
  }
};

constexpr double kHalfLog2Pi = 0.5 * penf::kLog2Pi;

}  // namespace

TEST(Condition, ZeroInputAndBiasGiveZeroContext) {
  Flow f(6, 2, 3, 1);
  nm::Tape tape(false);
  const Tensor hc = penf::condition(tape, f.store, tape.constant(Tensor({3, 6})), 6).value();
  EXPECT_EQ(hc.shape(), (nm::Shape{6, 6}));
  for (double v : hc.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Condition, EqualInputsGiveIdenticalContext) {
  Flow f(6, 2, 3, 2);
  std::mt19937_64 rng(3);
  const Tensor c = oracle::random_tensor({3, 6}, rng);
  nm::Tape tape(false);
  const Tensor a = penf::condition(tape, f.store, tape.constant(c), 6).value();
  const Tensor b = penf::condition(tape, f.store, tape.constant(c), 6).value();
  EXPECT_EQ(a.raw(), b.raw());
  for (std::size_t t = 1; t < 6; ++t)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a(t, j), a(0, j));
}

TEST(Condition, ShapeMismatchIsAnError) {
  Flow f(6, 2, 3, 4);
  nm::Tape tape(false);
  EXPECT_THROW(penf::condition(tape, f.store, tape.constant(Tensor({2, 6})), 6), Error);
}

TEST(Condition, GradientMatchesFiniteDifferences) {
  Flow f(6, 2, 3, 5);
  std::mt19937_64 rng(6);
  f.store.add("c_ind", oracle::random_tensor({3, 6}, rng));
  auto loss = [&](nm::Tape& tape) {
    Var hc = penf::condition(tape, f.store, tape.param(f.store.get("c_ind")), 6);
    return nm::sum(nm::tanh(hc));
  };
  const auto rep = oracle::check_param_grads(f.store, loss, 18, 1e-6, "c_ind");
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
  const auto cond = oracle::check_param_grads(f.store, loss, 18, 1e-6, "penf.cond");
  EXPECT_LT(cond.max_rel_err, 1e-4) << cond.worst;
}

TEST(Forward, ZeroOutputLayersGiveIdentity) {
  Flow f(8, 3, 2, 7, /*out_scale=*/0.0);
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({8, 3}, rng);
  nm::Tape tape(false);
  const auto out = f.forward(tape, x);
  EXPECT_EQ(out.z.value().raw(), x.raw());
  EXPECT_EQ(out.logdet.item(), 0.0);
  EXPECT_EQ(penf::inverse(f.store, x, f.hc, f.mask, f.cfg).raw(), x.raw());
}

TEST(Forward, SingleLayerClosedForm) {
  Flow f(2, 1, 1, 9, 0.0, /*layers=*/1);
  ASSERT_EQ(f.mask(0, 0), 0);  // t = 0 is transformed, t = 1 kept
  const double bs = 0.8, bt = -0.35;
  f.store.get("penf.l0.s.out.b").value[0] = bs;
  f.store.get("penf.l0.t.out.b").value[0] = bt;
  const double s = 5.0 * std::tanh(bs / 5.0);  // soft clamp of the scale
  const Tensor x({2, 1}, {1.3, -0.4});
  nm::Tape tape(false);
  const auto out = f.forward(tape, x);
  EXPECT_NEAR(out.z.value()[0], (1.3 - bt) * std::exp(-s), 1e-14);
  EXPECT_EQ(out.z.value()[1], -0.4);
  EXPECT_NEAR(out.logdet.item(), -s, 1e-14);
  const Tensor back = penf::inverse(f.store, out.z.value(), f.hc, f.mask, f.cfg);
  EXPECT_NEAR(back[0], out.z.value()[0] * std::exp(s) + bt, 1e-14);
  EXPECT_NEAR(back[0], 1.3, 1e-14);
}

TEST(Forward, JacobianDeterminantMatchesFiniteDifferences) {
  for (long period : {1L, 2L, 3L}) {
    Flow f(4, 3, period, 10 + static_cast<std::uint64_t>(period), 0.5);
    std::mt19937_64 rng(11);
    const Tensor x = oracle::random_tensor({4, 3}, rng);
    auto fn = [&](const std::vector<double>& v) { return f.z(Tensor({4, 3}, v)).raw(); };
    const Eigen::MatrixXd J = oracle::fd_jacobian(fn, x.raw());
    const double det = std::abs(J.determinant());
    const double want = std::exp(f.logdet(x));
    EXPECT_LT(std::abs(det - want) / want, 1e-3) << "period " << period;
  }
}

TEST(Forward, SingleLayerJacobianIsTriangular) {
  // One coupling layer: kept entries map to themselves, transformed entries
  // depend on kept ones only, so the diagonal carries the whole determinant.
  Flow f(6, 2, 2, 26, 0.5, /*layers=*/1);
  std::mt19937_64 rng(27);
  const Tensor x = oracle::random_tensor({6, 2}, rng);
  auto fn = [&](const std::vector<double>& v) { return f.z(Tensor({6, 2}, v)).raw(); };
  const Eigen::MatrixXd J = oracle::fd_jacobian(fn, x.raw());
  double logdiag = 0;
  for (long i = 0; i < J.rows(); ++i) logdiag += std::log(std::abs(J(i, i)));
  EXPECT_NEAR(logdiag, f.logdet(x), 1e-6);
  const auto& bits = f.mask.bits();
  for (long i = 0; i < J.rows(); ++i)
    for (long j = 0; j < J.cols(); ++j)
      if (i != j && (bits[static_cast<std::size_t>(j)] == 0 || bits[static_cast<std::size_t>(i)] == 1))
        EXPECT_NEAR(J(i, j), 0.0, 1e-8) << i << "," << j;
}

TEST(Inverse, RoundTripOnRandomWindows) {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t T = 6 + seed % 11, D = 1 + seed % 3;
    Flow f(T, D, static_cast<long>(1 + seed % 5), seed, 0.6, 2 + seed % 2);
    std::mt19937_64 rng(seed + 1000);
    const Tensor x = oracle::random_tensor({T, D}, rng, 2.0);
    const Tensor back = penf::inverse(f.store, f.z(x), f.hc, f.mask, f.cfg);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(LogProb, StandardNormalValuesUnderIdentity) {
  Flow one(2, 1, 1, 12, 0.0);
  // T = 1 cannot be masked, so the single-point density is checked through
  // the per-timestep decomposition of a T = 2 window.
  nm::Tape tape(false);
  const auto out = one.forward(tape, Tensor({2, 1}));
  EXPECT_NEAR(penf::timestep_scores(out)[0], kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(-kHalfLog2Pi, -0.9189385332, 1e-10);

  Flow f(2, 3, 1, 13, 0.0);
  EXPECT_NEAR(f.log_prob(Tensor({2, 3})), -3.0 * penf::kLog2Pi, 1e-12);
}

TEST(LogProb, DensityIntegratesToOne) {
  Flow f(2, 1, 1, 14, 0.4);
  const int n = 200;
  const double lo = -10, hi = 10, h = (hi - lo) / (n - 1);
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
      total += w * std::exp(f.log_prob(Tensor({2, 1}, {lo + i * h, lo + j * h})));
    }
  EXPECT_NEAR(total * h * h, 1.0, 1e-2);
}

TEST(LogProb, GradientWrtScaleNetMatchesFiniteDifferences) {
  Flow f(8, 2, 2, 15, 0.3);
  std::mt19937_64 rng(16);
  const Tensor x = oracle::random_tensor({8, 2}, rng);
  auto nll = [&](nm::Tape& tape) { return nm::scale(penf::log_prob(f.forward(tape, x)), -1.0); };
  const auto s = oracle::check_param_grads(f.store, nll, 10, 1e-6, "penf.l0.s");
  EXPECT_LT(s.max_rel_err, 1e-4) << s.worst;
  const auto all = oracle::check_param_grads(f.store, nll, 6, 1e-6, "penf.l");
  EXPECT_LT(all.max_rel_err, 1e-4) << all.worst;
}

TEST(LogProb, ConditioningChangesTheDensity) {
  Flow f(8, 2, 2, 17, 0.3);
  std::mt19937_64 rng(18);
  const Tensor x = oracle::random_tensor({8, 2}, rng);
  const Tensor c1 = oracle::random_tensor({3, 6}, rng), c2 = oracle::random_tensor({3, 6}, rng);
  auto lp = [&](const Tensor& c) {
    nm::Tape tape(false);
    Var hc = penf::condition(tape, f.store, tape.constant(c), 8);
    return penf::log_prob(penf::forward(tape, f.store, tape.constant(x), hc, f.mask, f.cfg)).item();
  };
  EXPECT_NE(lp(c1), lp(c2));
}

TEST(Scores, IdentityClosedFormAndArgmax) {
  Flow f(5, 2, 1, 19, 0.0);
  const Tensor x({5, 2}, {0.1, 0.2, -1.0, 0.5, 3.0, -2.0, 0.0, 0.0, 0.7, 0.7});
  nm::Tape tape(false);
  const auto tau = penf::timestep_scores(f.forward(tape, x));
  for (std::size_t t = 0; t < 5; ++t) {
    const double q = x(t, 0) * x(t, 0) + x(t, 1) * x(t, 1);
    EXPECT_NEAR(tau[t], 0.5 * q + penf::kLog2Pi, 1e-14);
  }
  EXPECT_EQ(std::max_element(tau.begin(), tau.end()) - tau.begin(), 2);
}

TEST(Scores, SpikeWindowScoresHigher) {
  Flow f(10, 1, 2, 20, 0.0);
  Tensor spike({10, 1});
  spike[4] = 5.0;
  EXPECT_GT(-f.log_prob(spike), -f.log_prob(Tensor({10, 1})));
}

TEST(Scores, DecompositionSumsToWindowScore) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Flow f(12, 2, 3, 21 + seed, 0.5);
    std::mt19937_64 rng(seed);
    const Tensor x = oracle::random_tensor({12, 2}, rng);
    nm::Tape tape(false);
    const auto out = f.forward(tape, x);
    const auto tau = penf::timestep_scores(out);
    double s = 0;
    for (double v : tau) s += v;
    EXPECT_NEAR(s, -penf::log_prob(out).item(), 1e-10);
  }
}

TEST(Forward, ConsecutiveLayersTouchEveryEntry) {
  Flow f(12, 2, 3, 22, 0.5);
  const auto m0 = penf::detail::layer_mask(f.mask, 0), m1 = penf::detail::layer_mask(f.mask, 1);
  for (std::size_t i = 0; i < m0.bits().size(); ++i) EXPECT_EQ(m0.bits()[i] + m1.bits()[i], 1);
  std::mt19937_64 rng(23);
  const Tensor x = oracle::random_tensor({12, 2}, rng);
  const Tensor z = f.z(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NE(z[i], x[i]);
}

TEST(Forward, NonFiniteInputReportsLayer) {
  Flow f(6, 1, 2, 24, 0.3);
  Tensor x({6, 1});
  x[3] = std::nan("");
  try {
    f.z(x);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos) << e.what();
  }
  EXPECT_THROW(penf::inverse(f.store, x, f.hc, f.mask, f.cfg), Error);
}

TEST(Forward, ShapeMismatchIsAnError) {
  Flow f(6, 2, 2, 25);
  EXPECT_THROW(f.z(Tensor({5, 2})), Error);
  EXPECT_THROW(f.z(Tensor({6, 3})), Error);
}
