#pragma once

// Periodic normalizing flow: affine coupling layers whose partition is the
// periodical checkerboard mask, conditioned on the fused cause
// representation through a tiled context H_c.
//
// Layer update on the transformed entries (mask value 0):
//   h_l = (h_{l-1} - T(.)) * exp(-S(.)),   log|det| += -sum S(.)
// Kept entries pass through. S and T at timestep t read the kept entries at
// t - p, t and t + p (p = mask block length, so t +- p always lies in a kept
// block when t is transformed) together with H_c[t]; the Jacobian is
// therefore triangular.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "capulse/numeric.hpp"
#include "capulse/pcmask.hpp"

namespace capulse::penf {

using numeric::Tensor;
using numeric::Var;

struct FlowConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 32;
  std::size_t slots = 10;
  std::size_t layers = 2;
  std::size_t blocks = 2;
  double clamp = 5.0;
};

inline std::string layer_prefix(std::size_t l, const char* net) {
  return "penf.l" + std::to_string(l) + "." + net;
}

/// Conditioner `penf.cond` (N*D_h -> D_h) and, per layer, S and T nets with
/// `blocks` tanh hidden layers and a zero-initialised output layer.
inline void init_params(numeric::ParamStore& store, const FlowConfig& cfg, numeric::Rng& rng) {
  if (cfg.layers < 1 || cfg.blocks < 1) throw Error("penf: layers and blocks must be >= 1");
  const std::size_t h = cfg.hidden_dim;
  numeric::add_linear(store, "penf.cond", cfg.slots * h, h, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (const char* net : {"s", "t"}) {
      const std::string pre = layer_prefix(l, net);
      numeric::add_linear(store, pre + ".h0", 3 * cfg.input_dim + h, h, rng);
      for (std::size_t j = 1; j < cfg.blocks; ++j) numeric::add_linear(store, pre + ".h" + std::to_string(j), h, h, rng);
      numeric::add_linear(store, pre + ".out", h, cfg.input_dim, rng, 1.0, /*zero=*/true);
    }
}

/// Flatten C_ind, map it to one D_h vector and tile it over T timesteps.
inline Var condition(numeric::Tape& tape, numeric::ParamStore& store, Var c_ind, std::size_t T) {
  const auto& w = store.get("penf.cond.w").value;
  if (c_ind.value().size() != w.rows())
    throw Error("penf::condition: C_ind " + numeric::shape_str(c_ind.shape()) + " does not match conditioner " +
                numeric::shape_str(w.shape()));
  Var flat = numeric::reshape(c_ind, {1, c_ind.value().size()});
  Var ctx = numeric::Linear{"penf.cond"}(tape, store, flat);
  return numeric::gather_rows(ctx, std::vector<long>(T, 0));
}

struct FlowOutput {
  Var z;
  Var logdet;    // 1 x 1
  Var logdet_t;  // T x 1, per-timestep contributions
};

namespace detail {

inline Var mlp(numeric::Tape& tape, numeric::ParamStore& store, const std::string& pre, Var in, std::size_t blocks) {
  Var h = numeric::tanh(numeric::Linear{pre + ".h0"}(tape, store, in));
  for (std::size_t j = 1; j < blocks; ++j) h = numeric::tanh(numeric::Linear{pre + ".h" + std::to_string(j)}(tape, store, h));
  return numeric::Linear{pre + ".out"}(tape, store, h);
}

/// Mask for layer l: the mask itself on even l, its complement on odd l.
inline PCMask layer_mask(const PCMask& mask, std::size_t l) { return l % 2 == 0 ? mask : mask.complement(); }

struct Coupling {
  Var scale;  // S, zero on kept entries
  Var shift;  // T, zero on kept entries
};

inline Coupling coupling(numeric::Tape& tape, numeric::ParamStore& store, Var h, Var hc, const PCMask& m,
                         std::size_t l, const FlowConfig& cfg) {
  const std::size_t T = h.rows();
  const std::size_t p = m.period();
  Tensor keep = m.as_tensor();
  Tensor trans(keep.shape());
  for (std::size_t i = 0; i < keep.size(); ++i) trans[i] = 1.0 - keep[i];
  Var kept = numeric::mul(h, tape.constant(std::move(keep)));
  std::vector<long> before(T), after(T);
  for (std::size_t t = 0; t < T; ++t) {
    before[t] = t >= p ? static_cast<long>(t - p) : -1;
    after[t] = t + p < T ? static_cast<long>(t + p) : -1;
  }
  Var in = numeric::concat_cols({numeric::gather_rows(kept, before), kept, numeric::gather_rows(kept, after), hc});
  Var tmask = tape.constant(std::move(trans));
  Var s = mlp(tape, store, layer_prefix(l, "s"), in, cfg.blocks);
  s = numeric::scale(numeric::tanh(numeric::scale(s, 1.0 / cfg.clamp)), cfg.clamp);
  Var t = mlp(tape, store, layer_prefix(l, "t"), in, cfg.blocks);
  return {numeric::mul(s, tmask), numeric::mul(t, tmask)};
}

inline void require_finite(const Var& v, std::size_t layer, const char* what) {
  if (!v.value().all_finite())
    throw Error("penf: non-finite " + std::string(what) + " in layer " + std::to_string(layer));
}

}  // namespace detail

inline void check_shapes(const Var& x, const Var& hc, const PCMask& mask, const FlowConfig& cfg) {
  if (x.shape().size() != 2 || x.cols() != cfg.input_dim || x.rows() != mask.length() || mask.dims() != cfg.input_dim)
    throw Error("penf: window " + numeric::shape_str(x.shape()) + " does not match mask [" +
                std::to_string(mask.length()) + "," + std::to_string(mask.dims()) + "]");
  if (hc.rows() != x.rows() || hc.cols() != cfg.hidden_dim)
    throw Error("penf: context " + numeric::shape_str(hc.shape()) + " does not match window");
}

/// X -> Z with the log-determinant of dZ/dX.
inline FlowOutput forward(numeric::Tape& tape, numeric::ParamStore& store, Var x, Var hc, const PCMask& mask,
                          const FlowConfig& cfg) {
  check_shapes(x, hc, mask, cfg);
  Var h = x;
  Var logdet_t;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    auto c = detail::coupling(tape, store, h, hc, detail::layer_mask(mask, l), l, cfg);
    detail::require_finite(c.scale, l, "scale");
    h = numeric::mul(numeric::sub(h, c.shift), numeric::exp(numeric::scale(c.scale, -1.0)));
    detail::require_finite(h, l, "activation");
    Var contrib = numeric::scale(numeric::sum_cols(c.scale), -1.0);
    logdet_t = l == 0 ? contrib : numeric::add(logdet_t, contrib);
  }
  return {h, numeric::sum(logdet_t), logdet_t};
}

/// Z -> X, undoing the layers in reverse order.
inline Tensor inverse(numeric::ParamStore& store, const Tensor& z, const Tensor& hc_value, const PCMask& mask,
                      const FlowConfig& cfg) {
  numeric::Tape tape(false);
  Var h = tape.constant(z);
  Var hc = tape.constant(hc_value);
  check_shapes(h, hc, mask, cfg);
  for (std::size_t l = cfg.layers; l-- > 0;) {
    auto c = detail::coupling(tape, store, h, hc, detail::layer_mask(mask, l), l, cfg);
    h = numeric::add(numeric::mul(h, numeric::exp(c.scale)), c.shift);
    detail::require_finite(h, l, "activation");
  }
  return h.value();
}

inline constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

/// log N(z; 0, I) + logdet.
inline Var log_prob(const FlowOutput& f) {
  const double n = static_cast<double>(f.z.value().size());
  Var quad = numeric::scale(numeric::dot(f.z, f.z), -0.5);
  return numeric::add_scalar(numeric::add(quad, f.logdet), -0.5 * n * kLog2Pi);
}

/// Per-timestep anomaly scores: 0.5 ||z_t||^2 + (D/2) log 2pi - logdet_t.
/// They sum to -log_prob.
inline std::vector<double> timestep_scores(const FlowOutput& f) {
  const Tensor& z = f.z.value();
  const Tensor& ld = f.logdet_t.value();
  const std::size_t T = z.rows(), D = z.cols();
  std::vector<double> tau(T);
  for (std::size_t t = 0; t < T; ++t) {
    double q = 0.0;
    for (std::size_t d = 0; d < D; ++d) q += z[t * D + d] * z[t * D + d];
    tau[t] = 0.5 * q + 0.5 * static_cast<double>(D) * kLog2Pi - ld[t];
  }
  return tau;
}

}  // namespace capulse::penf
