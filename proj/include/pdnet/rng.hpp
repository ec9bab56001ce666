#pragma once

#include <cstdint>

#include "pdnet/tensor.hpp"

namespace pdnet {

/// SplitMix64 stream (Steele, Lea & Flood 2014). The generator state is pure
/// 64-bit integer arithmetic, so a seed yields the same bits everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t state_;
};

/// Samples from N(0, stddev^2), redrawing anything outside +/- 2*stddev.
template <typename Real>
Tensor<Real> truncated_normal_init(Shape shape, double stddev, Rng& rng);

}  // namespace pdnet
