#pragma once

// Multi-period cause fusion: attention over period tokens combined with
// softmaxed amplitude weights.

#include <cmath>
#include <cstddef>
#include <vector>

#include "capulse/numeric.hpp"
#include "capulse/pacm.hpp"

namespace capulse::mpcf {

using numeric::Var;

inline void init_params(numeric::ParamStore& store, std::size_t hidden_dim, numeric::Rng& rng) {
  numeric::add_linear(store, "mpcf.query", hidden_dim, hidden_dim, rng);
  numeric::add_linear(store, "mpcf.key", hidden_dim, hidden_dim, rng);
}

struct OmniRepresentation {
  Var values;       // N x D_h
  Var attention;    // 1 x k, a_p
  Var amplitude;    // 1 x k, softmax(w_p)
  Var combined;     // 1 x k, u
};

/// a_p as the column mean of the row-softmaxed k x k score matrix,
/// renormalised to sum to one.
inline Var period_attention(numeric::Tape& tape, numeric::ParamStore& store, Var tokens) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(tokens.cols()));
  Var q = numeric::Linear{"mpcf.query"}(tape, store, tokens);
  Var k = numeric::Linear{"mpcf.key"}(tape, store, tokens);
  Var att = numeric::softmax_rows(numeric::scale(numeric::matmul(q, numeric::transpose(k)), inv_sqrt));
  Var a = numeric::mean_rows(att);
  return numeric::scale_by(a, numeric::reciprocal(numeric::sum(a)));
}

/// Convex combination sum_i u_i C_pi with u = normalize(softmax(w) * a).
inline Var combine(const std::vector<Var>& blocks, Var amplitude, Var attention, Var* combined_out = nullptr) {
  Var v = numeric::mul(amplitude, attention);
  Var u = numeric::scale_by(v, numeric::reciprocal(numeric::sum(v)));
  if (combined_out) *combined_out = u;
  Var acc = numeric::scale_by(blocks[0], numeric::element(u, 0));
  for (std::size_t i = 1; i < blocks.size(); ++i)
    acc = numeric::add(acc, numeric::scale_by(blocks[i], numeric::element(u, i)));
  return acc;
}

inline OmniRepresentation fuse(numeric::Tape& tape, numeric::ParamStore& store, const pacm::CausalPyramid& pyr) {
  if (pyr.size() == 0) throw Error("mpcf::fuse: empty pyramid");
  std::vector<Var> tokens;
  for (const auto& c : pyr.factors) tokens.push_back(numeric::mean_rows(c));
  OmniRepresentation out;
  out.attention = period_attention(tape, store, numeric::concat_rows(tokens));
  out.amplitude = numeric::softmax_rows(pyr.weights);
  out.values = combine(pyr.factors, out.amplitude, out.attention, &out.combined);
  return out;
}

}  // namespace capulse::mpcf
