#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "capulse/numeric.hpp"

namespace capulse {

/// Periodical checkerboard mask over a [T x D] window. Entry (t, d) is
/// floor(t / period) mod 2, identical across dimensions.
class PCMask {
 public:
  PCMask() = default;

  /// Blocks of `global_period` zeros then ones. A period >= T is clamped to
  /// ceil(T/2) so that both values occur.
  static PCMask build(long global_period, std::size_t T, std::size_t D) {
    if (global_period <= 0) throw Error("PCMask: period must be positive");
    if (T < 2) throw Error("PCMask: window length must be >= 2");
    if (D < 1) throw Error("PCMask: need at least one dimension");
    std::size_t p = static_cast<std::size_t>(global_period);
    if (p >= T) p = (T + 1) / 2;
    PCMask m;
    m.period_ = p;
    m.T_ = T;
    m.D_ = D;
    m.bits_.resize(T * D);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < D; ++d) m.bits_[t * D + d] = static_cast<std::uint8_t>((t / p) % 2);
    return m;
  }

  /// First half zeros, second half ones; the mask used when global period
  /// information is switched off.
  static PCMask half_split(std::size_t T, std::size_t D) { return build(static_cast<long>(T), T, D); }

  PCMask complement() const {
    PCMask m = *this;
    for (auto& b : m.bits_) b = static_cast<std::uint8_t>(1 - b);
    return m;
  }

  std::size_t period() const { return period_; }
  std::size_t length() const { return T_; }
  std::size_t dims() const { return D_; }
  std::uint8_t operator()(std::size_t t, std::size_t d) const { return bits_[t * D_ + d]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  numeric::Tensor as_tensor() const {
    numeric::Tensor out({T_, D_});
    for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i];
    return out;
  }

  bool operator==(const PCMask&) const = default;

 private:
  std::size_t period_ = 0;
  std::size_t T_ = 0;
  std::size_t D_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace capulse
