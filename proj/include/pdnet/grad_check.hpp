#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pdnet/tape.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate: index into the inputs and flat offset.
  std::size_t worst_input = 0;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// A scalar-valued function of some tensors. It must record onto the tape
/// when one is given and run untracked when passed nullptr.
template <typename Real>
using ScalarFn = std::function<Tensor<Real>(Tape*)>;

/// Compares reverse-mode gradients of `f` with central differences
/// (f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate over every
/// tensor in `inputs`. The error of a coordinate is
/// |a - n| / max(|a|, |n|, 1e-8). Input grad buffers are overwritten.
///
/// `retry_steps` serves piecewise-linear functions and tiny coordinates: a
/// coordinate whose error exceeds `retry_above` is re-differenced with each
/// listed step h in turn (central at h, Richardson over h and h/2, then the
/// two one-sided differences) and keeps the best agreement. A step that
/// straddles a ReLU or max-pool kink then counts as a mismatch only if every
/// estimate at every step does.
template <typename Real>
GradCheckReport grad_check(const ScalarFn<Real>& f, std::span<Tensor<Real>> inputs, double eps = 1e-3,
                           std::span<const double> retry_steps = {}, double retry_above = 1e-6);

/// Gradients of `f` against central differences of a higher-precision twin
/// `reference` evaluated on `reference_inputs`, which are overwritten with the
/// values of `inputs` first. Instantiated for float/double. Float round-off
/// in the forward pass alone puts about 1e-4 absolute noise on float
/// differences, which would swamp the tolerance on small coordinates.
template <typename Real, typename Ref>
GradCheckReport grad_check_mixed(const ScalarFn<Real>& f, std::span<Tensor<Real>> inputs,
                                 const ScalarFn<Ref>& reference, std::span<Tensor<Ref>> reference_inputs,
                                 double eps = 1e-3, std::span<const double> retry_steps = {},
                                 double retry_above = 1e-6);

extern template GradCheckReport grad_check<float>(const ScalarFn<float>&, std::span<Tensor<float>>, double,
                                                  std::span<const double>, double);
extern template GradCheckReport grad_check<double>(const ScalarFn<double>&, std::span<Tensor<double>>, double,
                                                   std::span<const double>, double);

extern template GradCheckReport grad_check_mixed<float, double>(const ScalarFn<float>&, std::span<Tensor<float>>,
                                                                const ScalarFn<double>&, std::span<Tensor<double>>,
                                                                double, std::span<const double>, double);

}  // namespace pdnet
