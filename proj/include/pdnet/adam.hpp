#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdnet/parameter.hpp"

namespace pdnet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one parameter list, in list order.
template <typename Real>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update over `params`, reading each parameter's
/// accumulated gradient. Frozen parameters and state buffers are skipped and
/// their moments stay untouched. A non-finite gradient aborts the step before
/// anything is modified.
template <typename Real>
void adam_step(std::span<Parameter<Real>> params, AdamState<Real>& state, double lr);

template <typename Real>
void zero_grads(std::span<Parameter<Real>> params);

}  // namespace pdnet
