#pragma once

// The trainable detector. All sub-networks share one parameter store; this
// header also holds the loss assembly and window scoring.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "capulse/causal.hpp"
#include "capulse/mpcf.hpp"
#include "capulse/numeric.hpp"
#include "capulse/pacm.hpp"
#include "capulse/pcmask.hpp"
#include "capulse/penf.hpp"
#include "capulse/series.hpp"
#include "capulse/spectral.hpp"

namespace capulse {

struct TrainConfig {
  double lr = 0.001;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t window = 60;
  std::size_t stride = 5;
  double alpha = 0.1;
  double beta = 0.1;
  std::size_t top_k = 3;
  std::size_t slots = 10;
  std::size_t hidden_dim = 32;
  std::size_t layers = 2;
  std::size_t blocks = 2;
  double sigma = 0.1;
  double k_h_frac = 0.25;
  spectral::NoiseKind noise = spectral::NoiseKind::gaussian;
  spectral::Band location = spectral::Band::high;
  std::uint64_t seed = 0;
  std::size_t patience = 10;
  bool pc_mask = true;

  void validate() const {
    if (!(lr > 0)) throw Error("config: lr must be > 0");
    if (batch_size < 1 || window < 2 || stride < 1) throw Error("config: batch_size, window, stride must be positive");
    if (alpha < 0 || beta < 0) throw Error("config: alpha and beta must be >= 0");
    if (top_k < 1 || 2 * top_k >= window) throw Error("config: need 1 <= top_k < window/2");
    if (slots < 1 || hidden_dim < 1 || layers < 1 || blocks < 1) throw Error("config: model sizes must be positive");
    if (sigma < 0) throw Error("config: sigma must be >= 0");
    if (!(k_h_frac > 0 && k_h_frac < 1)) throw Error("config: k_h_frac must lie in (0, 1)");
  }

  spectral::InterventionSpec intervention() const { return {k_h_frac, sigma, noise, location}; }
};

struct Model {
  TrainConfig config;
  std::size_t input_dim = 0;
  std::size_t global_period = 0;
  PCMask mask;
  Standardization standardization;
  numeric::ParamStore store;

  pacm::PacmConfig pacm_config() const { return {input_dim, config.hidden_dim, config.slots, config.top_k}; }
  penf::FlowConfig flow_config() const {
    return {input_dim, config.hidden_dim, config.slots, config.layers, config.blocks, 5.0};
  }
};

/// Independent deterministic stream derived from the run seed.
inline numeric::Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return numeric::Rng(seq);
}

/// Fresh parameters. The mask comes from `global_period` unless the config
/// disables it, in which case a fixed half/half split is used.
inline Model init_model(const TrainConfig& cfg, std::size_t input_dim, std::size_t global_period) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.input_dim = input_dim;
  m.global_period = global_period;
  m.mask = cfg.pc_mask ? PCMask::build(static_cast<long>(global_period), cfg.window, input_dim)
                       : PCMask::half_split(cfg.window, input_dim);
  m.standardization.mean.assign(input_dim, 0.0);
  m.standardization.stddev.assign(input_dim, 1.0);
  auto rng = make_rng(cfg.seed, 0);
  pacm::init_params(m.store, m.pacm_config(), rng);
  mpcf::init_params(m.store, cfg.hidden_dim, rng);
  penf::init_params(m.store, m.flow_config(), rng);
  return m;
}

struct LossParts {
  numeric::Var total;
  numeric::Var nf;
  numeric::Var sim;
  numeric::Var ind;
};

/// L = L_nf + alpha L_sim + beta L_ind, each averaged over the windows. A
/// zero weight leaves its term out of the graph entirely.
template <typename Rng>
LossParts total_loss(numeric::Tape& tape, Model& m, const std::vector<const numeric::Tensor*>& windows, Rng& noise_rng) {
  if (windows.empty()) throw Error("total_loss: empty batch");
  const auto pc = m.pacm_config();
  const auto fc = m.flow_config();
  const auto spec = m.config.intervention();
  std::vector<numeric::Var> nf, sim, ind;
  for (const auto* x : windows) {
    auto b = causal::causal_forward(tape, m.store, *x, pc, spec, noise_rng);
    auto hc = penf::condition(tape, m.store, b.c_ind, x->rows());
    auto f = penf::forward(tape, m.store, tape.constant(*x), hc, m.mask, fc);
    nf.push_back(numeric::scale(penf::log_prob(f), -1.0));
    sim.push_back(b.l_sim);
    ind.push_back(b.l_ind);
  }
  const double inv = 1.0 / static_cast<double>(windows.size());
  LossParts out;
  out.nf = numeric::scale(numeric::sum(numeric::concat_rows(nf)), inv);
  out.sim = numeric::scale(numeric::sum(numeric::concat_rows(sim)), inv);
  out.ind = numeric::scale(numeric::sum(numeric::concat_rows(ind)), inv);
  out.total = out.nf;
  if (m.config.alpha != 0.0) out.total = numeric::add(out.total, numeric::scale(out.sim, m.config.alpha));
  if (m.config.beta != 0.0) out.total = numeric::add(out.total, numeric::scale(out.ind, m.config.beta));
  return out;
}

/// Per-window scoring output.
struct WindowScore {
  std::vector<double> tau_t;
  double tau = 0.0;
  double log_prob = 0.0;
  spectral::PeriodSet periods;
  std::vector<double> amplitude_weight;  // softmax(w_p)
  std::vector<double> attention;         // a_p
};

/// Score one (already standardized) window. No intervention is applied, so
/// C_ind equals the clean representation.
inline WindowScore score_window(Model& m, const numeric::Tensor& x) {
  numeric::Tape tape(false);
  auto clean = causal::clean_path(tape, m.store, x, m.pacm_config());
  auto hc = penf::condition(tape, m.store, clean.omni.values, x.rows());
  auto f = penf::forward(tape, m.store, tape.constant(x), hc, m.mask, m.flow_config());
  WindowScore s;
  s.tau_t = penf::timestep_scores(f);
  s.log_prob = penf::log_prob(f).item();
  s.tau = -s.log_prob;
  s.periods = clean.pyramid.periods;
  s.amplitude_weight = clean.omni.amplitude.value().raw();
  s.attention = clean.omni.attention.value().raw();
  return s;
}

inline std::vector<WindowScore> score_windows(Model& m, const WindowBatch& batch) {
  std::vector<WindowScore> out;
  out.reserve(batch.size());
  for (const auto& w : batch.windows) out.push_back(score_window(m, w));
  return out;
}

/// Mean -log p over windows on the clean path.
inline double mean_nll(Model& m, const WindowBatch& batch) {
  if (batch.empty()) throw Error("mean_nll: empty batch");
  double acc = 0.0;
  for (const auto& w : batch.windows) acc += score_window(m, w).tau;
  return acc / static_cast<double>(batch.size());
}

}  // namespace capulse
