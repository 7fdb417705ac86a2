#pragma once

// Periodicity-aware cause miner: embed a window, pick its strongest local
// periods, fold the embedding into one (cycles x period) grid per period and
// turn each grid into a block of N latent cause slots.

#include <cstddef>
#include <string>
#include <vector>

#include "capulse/numeric.hpp"
#include "capulse/spectral.hpp"

namespace capulse::pacm {

using numeric::Var;

struct PacmConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 32;
  std::size_t slots = 10;
  std::size_t top_k = 3;
};

/// Parameters: `pacm.embed` D -> D_h; `pacm.grid.{self,cycle,phase}` D_h x
/// D_h plus `pacm.grid.b`, the shared grid transform; `pacm.slot` D_h -> N*D_h.
inline void init_params(numeric::ParamStore& store, const PacmConfig& cfg, numeric::Rng& rng) {
  const std::size_t h = cfg.hidden_dim;
  numeric::add_linear(store, "pacm.embed", cfg.input_dim, h, rng);
  for (const char* tap : {"self", "cycle", "phase"}) {
    numeric::Tensor w({h, h});
    const double a = 0.5 * std::sqrt(6.0 / static_cast<double>(2 * h));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : w.raw()) x = u(rng);
    store.add(std::string("pacm.grid.") + tap, std::move(w));
  }
  store.add("pacm.grid.b", numeric::Tensor({1, h}));
  numeric::add_linear(store, "pacm.slot", h, cfg.slots * h, rng);
}

/// H = X W_e + b_e.
inline Var embed(numeric::Tape& tape, numeric::ParamStore& store, Var x) {
  const auto& w = store.get("pacm.embed.w").value;
  if (x.shape().size() != 2 || x.cols() != w.rows())
    throw Error("pacm::embed: input " + numeric::shape_str(x.shape()) + " does not match embedding " +
                numeric::shape_str(w.shape()));
  return numeric::Linear{"pacm.embed"}(tape, store, x);
}

/// Per-period cause blocks (each N x D_h) and their amplitude weights.
struct CausalPyramid {
  std::vector<Var> factors;
  Var weights;  // 1 x k, channel-averaged DFT amplitude / T at each selected bin
  spectral::PeriodSet periods;

  std::size_t size() const { return factors.size(); }
};

/// Grid geometry for a window of length T folded at `period`.
struct GridShape {
  std::size_t cycles = 0;
  std::size_t period = 0;
  std::size_t cells() const { return cycles * period; }
};

inline GridShape grid_shape(std::size_t T, std::size_t period) { return {(T + period - 1) / period, period}; }

/// Fold H (T x D_h) at `period`, mix each cell with its predecessor in the
/// previous cycle and in the same cycle, mean-pool and project to slots.
inline Var period_block(numeric::Tape& tape, numeric::ParamStore& store, Var h, std::size_t period,
                        std::size_t slots) {
  const std::size_t T = h.rows(), dh = h.cols();
  const GridShape g = grid_shape(T, period);
  std::vector<long> pad(g.cells()), prev_cycle(g.cells()), prev_phase(g.cells());
  for (std::size_t c = 0; c < g.cells(); ++c) {
    pad[c] = c < T ? static_cast<long>(c) : -1;
    prev_cycle[c] = c >= period ? static_cast<long>(c - period) : -1;
    prev_phase[c] = c % period ? static_cast<long>(c - 1) : -1;
  }
  Var grid = numeric::gather_rows(h, pad);
  Var up = numeric::gather_rows(grid, prev_cycle);
  Var left = numeric::gather_rows(grid, prev_phase);
  Var mixed = numeric::add(numeric::add(numeric::matmul(grid, tape.param(store.get("pacm.grid.self"))),
                                        numeric::matmul(up, tape.param(store.get("pacm.grid.cycle")))),
                           numeric::matmul(left, tape.param(store.get("pacm.grid.phase"))));
  Var y = numeric::add(grid, numeric::tanh(numeric::add_row(mixed, tape.param(store.get("pacm.grid.b")))));
  Var pooled = numeric::mean_rows(y);
  Var flat = numeric::Linear{"pacm.slot"}(tape, store, pooled);
  return numeric::reshape(flat, {slots, dh});
}

inline CausalPyramid extract_pyramid(numeric::Tape& tape, numeric::ParamStore& store, Var h, const PacmConfig& cfg) {
  CausalPyramid out;
  out.periods = spectral::top_k_periods(h.value(), cfg.top_k);
  if (out.periods.size() == 0) throw Error("pacm: no usable frequency bins in window");
  out.weights = numeric::scale(numeric::dft_amplitude(h, out.periods.frequencies),
                               1.0 / static_cast<double>(h.rows()));
  for (std::size_t p : out.periods.periods) out.factors.push_back(period_block(tape, store, h, p, cfg.slots));
  return out;
}

}  // namespace capulse::pacm
