#include "pdnet/rng.hpp"

#include <cmath>
#include <numbers>

namespace pdnet {
namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix(state_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix(state_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
}

template <typename Real>
Tensor<Real> truncated_normal_init(Shape shape, double stddev, Rng& rng) {
  if (!(stddev > 0.0)) throw ConfigError("truncated_normal_init: stddev must be positive");
  std::vector<Real> data(shape.numel());
  for (Real& v : data) {
    double x;
    do {
      x = rng.normal();
    } while (std::abs(x) > 2.0);
    v = static_cast<Real>(x * stddev);
  }
  return Tensor<Real>::from_data(shape, std::move(data));
}

template Tensor<float> truncated_normal_init<float>(Shape, double, Rng&);
template Tensor<double> truncated_normal_init<double>(Shape, double, Rng&);

}  // namespace pdnet
