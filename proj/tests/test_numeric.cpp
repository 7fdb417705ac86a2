#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "capulse/numeric.hpp"
#include "oracles.hpp"

namespace nm = capulse::numeric;
using nm::ParamStore;
using nm::Tape;
using nm::Tensor;
using nm::Var;

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    nm::matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const capulse::Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  Var c = tape.constant(Tensor({3, 2}));
  try {
    nm::add(a, c);
    FAIL() << "expected a shape error";
  } catch (const capulse::Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[3,2]"), std::string::npos);
  }
}

TEST(Tensor, ConstructorRejectsWrongDataSize) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3, 0.0)), capulse::Error);
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Tape tape;
  Var s = nm::softmax_rows(tape.constant(Tensor({1, 2})));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.5);
}

TEST(Ops, SoftmaxIsShiftInvariant) {
  std::mt19937_64 rng(1);
  Tensor x = oracle::random_tensor({3, 4}, rng);
  Tensor y = x;
  for (auto& v : y.raw()) v += 123.0;
  Tape tape;
  const Tensor a = nm::softmax_rows(tape.constant(x)).value();
  const Tensor b = nm::softmax_rows(tape.constant(y)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Ops, TanhDerivativeAtZeroIsOne) {
  ParamStore store;
  store.add("x", Tensor({1, 1}));
  Tape tape;
  Var y = nm::tanh(tape.param(store.get("x")));
  tape.backward(nm::sum(y));
  EXPECT_DOUBLE_EQ(store.get("x").grad[0], 1.0);
}

TEST(Ops, MatmulMatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  Tensor a = oracle::random_tensor({4, 5}, rng), b = oracle::random_tensor({5, 3}, rng);
  Tape tape;
  const Tensor c = nm::matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
}

TEST(Ops, GatherRowsNegativeIndexGivesZeroRow) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor g = nm::gather_rows(a, {1, -1, 0}).value();
  EXPECT_EQ(g.raw(), (std::vector<double>{3, 4, 0, 0, 1, 2}));
}

TEST(Ops, DftAmplitudeMatchesNaiveDft) {
  std::mt19937_64 rng(3);
  Tensor x = oracle::random_tensor({16, 3}, rng);
  Tape tape;
  const Tensor amp = nm::dft_amplitude(tape.constant(x), {1, 4, 8}).value();
  const auto ref = oracle::naive_mean_amplitude(x);
  EXPECT_NEAR(amp[0], ref[1], 1e-10);
  EXPECT_NEAR(amp[1], ref[4], 1e-10);
  EXPECT_NEAR(amp[2], ref[8], 1e-10);
}

// A composite graph touching every differentiable op; every parameter entry
// is checked against central differences.
TEST(Gradients, CompositeGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  ParamStore store;
  store.add("a", oracle::random_tensor({4, 3}, rng, 0.5));
  store.add("b", oracle::random_tensor({3, 4}, rng, 0.5));
  store.add("bias", oracle::random_tensor({1, 4}, rng, 0.5));
  store.add("pos", oracle::random_tensor({4, 4}, rng, 0.3));
  store.add("s", oracle::random_tensor({1, 1}, rng));
  store.add("sig", oracle::random_tensor({8, 2}, rng));
  auto loss = [&](Tape& t) {
    Var a = t.param(store.get("a")), b = t.param(store.get("b"));
    Var bias = t.param(store.get("bias")), pos = t.param(store.get("pos"));
    Var s = t.param(store.get("s")), sig = t.param(store.get("sig"));
    Var m = nm::add_row(nm::matmul(a, b), bias);                        // 4x4
    Var p = nm::add_scalar(nm::square(pos), 0.5);                       // positive
    Var q = nm::mul(nm::tanh(m), nm::sqrt(p));
    q = nm::sub(q, nm::scale(nm::log(p), 0.3));
    q = nm::add(q, nm::reciprocal(nm::add_scalar(p, 1.0)));
    q = nm::add(q, nm::transpose(nm::exp(nm::scale(m, 0.2))));
    Var sm = nm::softmax_rows(q);
    Var cat = nm::concat_cols({sm, nm::scale_by(q, s)});                // 4x8
    Var stacked = nm::concat_rows({cat, nm::gather_rows(cat, {2, -1, 0})});  // 7x8
    Var r = nm::reshape(stacked, {8, 7});
    Var pooled = nm::mean_rows(r);                                      // 1x7
    Var cols = nm::sum_cols(r);                                         // 8x1
    Var amp = nm::dft_amplitude(sig, {1, 3});
    Var total = nm::add(nm::dot(pooled, pooled), nm::mean(nm::square(cols)));
    total = nm::add(total, nm::element(amp, 1));
    return nm::add(total, nm::sum(amp));
  };
  const auto rep = oracle::check_param_grads(store, loss, 64);
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
  EXPECT_GT(rep.checked, 40u);
}

TEST(Gradients, BackwardDoesNotMutateInputs) {
  std::mt19937_64 rng(5);
  ParamStore store;
  store.add("w", oracle::random_tensor({3, 3}, rng));
  const Tensor before = store.get("w").value;
  const Tensor x = oracle::random_tensor({2, 3}, rng);
  Tape tape;
  Var cx = tape.constant(x);
  Var y = nm::softmax_rows(nm::matmul(cx, tape.param(store.get("w"))));
  tape.backward(nm::sum(nm::square(y)));
  EXPECT_EQ(store.get("w").value.raw(), before.raw());
  EXPECT_EQ(cx.value().raw(), x.raw());
}

TEST(Gradients, IdenticalGraphsGiveIdenticalResults) {
  auto run = [] {
    std::mt19937_64 rng(6);
    ParamStore store;
    store.add("w", oracle::random_tensor({5, 5}, rng));
    Tape tape;
    Var w = tape.param(store.get("w"));
    Var l = nm::sum(nm::tanh(nm::matmul(w, w)));
    tape.backward(l);
    return std::make_pair(l.item(), store.get("w").grad.raw());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  ParamStore store;
  store.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
  {
    Tape tape;
    Var w = tape.param(store.get("w"));
    tape.backward(nm::scale(nm::sum(w), 0.0));
  }
  store.adam_step(0.1);
  EXPECT_EQ(store.get("w").value.raw(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(store.step(), 1);
}

TEST(Adam, FirstStepClosedForm) {
  // After one step m_hat = g and v_hat = g^2, so the update is
  // -lr * g / (|g| + eps).
  const double g = 0.37, lr = 0.001, eps = 1e-8;
  ParamStore store;
  store.add("w", Tensor({1, 1}, {2.0}));
  {
    Tape tape;
    tape.backward(nm::scale(nm::sum(tape.param(store.get("w"))), g));
  }
  store.adam_step(lr);
  EXPECT_NEAR(store.get("w").value[0], 2.0 - lr * g / (g + eps), 1e-15);
}

TEST(Adam, MissingGradientIsAnError) {
  ParamStore store;
  store.add("used", Tensor({1, 1}, {1.0}));
  store.add("unused", Tensor({1, 1}, {1.0}));
  {
    Tape tape;
    tape.backward(nm::sum(tape.param(store.get("used"))));
  }
  EXPECT_THROW(store.adam_step(0.1), capulse::Error);
}

TEST(Adam, TenStepsAreBitwiseReproducible) {
  auto run = [] {
    std::mt19937_64 rng(7);
    ParamStore store;
    store.add("w", oracle::random_tensor({3, 3}, rng));
    for (int i = 0; i < 10; ++i) {
      Tape tape;
      Var w = tape.param(store.get("w"));
      tape.backward(nm::sum(nm::square(nm::tanh(nm::matmul(w, w)))));
      store.adam_step(0.01);
    }
    return store.get("w").value.raw();
  };
  EXPECT_EQ(run(), run());
}

TEST(ParamStore, CloneIsDeep) {
  ParamStore a;
  a.add("w", Tensor({1, 2}, {1, 2}));
  ParamStore b = a.clone();
  b.get("w").value[0] = 9;
  EXPECT_EQ(a.get("w").value[0], 1);
  EXPECT_THROW(a.add("w", Tensor({1})), capulse::Error);
  EXPECT_THROW(a.get("nope"), capulse::Error);
}
