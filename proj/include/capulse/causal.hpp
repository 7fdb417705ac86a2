#pragma once

// Clean and intervened paths through the cause miner and fusion, the
// consistency loss between them and the factor-independence loss.

#include <cmath>
#include <cstddef>

#include "capulse/mpcf.hpp"
#include "capulse/numeric.hpp"
#include "capulse/pacm.hpp"
#include "capulse/spectral.hpp"

namespace capulse::causal {

using numeric::Var;

/// 1 - cos(vec a, vec b), evaluated as 0.5 ||a/|a| - b/|b|||^2 so that
/// identical inputs give exactly zero.
inline Var similarity_loss(Var a, Var b) {
  if (a.shape() != b.shape())
    throw Error("similarity_loss: shape mismatch " + numeric::shape_str(a.shape()) + " vs " +
                numeric::shape_str(b.shape()));
  Var na = numeric::sqrt(numeric::dot(a, a));
  Var nb = numeric::sqrt(numeric::dot(b, b));
  if (na.item() < 1e-12 || nb.item() < 1e-12)
    throw Error("similarity_loss: zero-norm representation, cosine undefined");
  Var diff = numeric::sub(numeric::scale_by(a, numeric::reciprocal(na)), numeric::scale_by(b, numeric::reciprocal(nb)));
  return numeric::scale(numeric::dot(diff, diff), 0.5);
}

/// ||C C^T - I_N||_F^2 over the N factor rows of C [N x D_h].
inline Var independence_loss(Var c) {
  const std::size_t n = c.rows();
  numeric::Tensor eye({n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  Var gram = numeric::matmul(c, numeric::transpose(c));
  return numeric::sum(numeric::square(numeric::sub(gram, c.tape->constant(std::move(eye)))));
}

struct CausalBundle {
  Var c_o;
  Var c_o_prime;
  Var c_ind;
  Var l_sim;
  Var l_ind;
  pacm::CausalPyramid pyramid;  // clean path
  mpcf::OmniRepresentation omni;
};

/// Clean path only; used for scoring where no intervention is applied.
struct CleanPath {
  pacm::CausalPyramid pyramid;
  mpcf::OmniRepresentation omni;
};

inline CleanPath clean_path(numeric::Tape& tape, numeric::ParamStore& store, const numeric::Tensor& x,
                            const pacm::PacmConfig& cfg) {
  Var h = pacm::embed(tape, store, tape.constant(x));
  CleanPath p;
  p.pyramid = pacm::extract_pyramid(tape, store, h, cfg);
  p.omni = mpcf::fuse(tape, store, p.pyramid);
  return p;
}

template <typename Rng>
CausalBundle causal_forward(numeric::Tape& tape, numeric::ParamStore& store, const numeric::Tensor& x,
                            const pacm::PacmConfig& cfg, const spectral::InterventionSpec& spec, Rng& rng) {
  const numeric::Tensor x_prime = spectral::intervene(x, spec, rng);
  auto clean = clean_path(tape, store, x, cfg);
  auto perturbed = clean_path(tape, store, x_prime, cfg);
  CausalBundle b;
  b.c_o = clean.omni.values;
  b.c_o_prime = perturbed.omni.values;
  b.c_ind = numeric::scale(numeric::add(b.c_o, b.c_o_prime), 0.5);
  b.l_sim = similarity_loss(b.c_o, b.c_o_prime);
  b.l_ind = independence_loss(b.c_ind);
  b.pyramid = std::move(clean.pyramid);
  b.omni = clean.omni;
  return b;
}

}  // namespace capulse::causal
