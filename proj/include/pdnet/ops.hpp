#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pdnet/tape.hpp"
#include "pdnet/tensor.hpp"

// Differentiable operators. Every operator takes an optional tape; when the
// tape is non-null and any input requires a gradient, the output requires a
// gradient and a backward rule is recorded. Passing nullptr runs inference
// only.
namespace pdnet::ops {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation with zero padding. `weight` is [Co,Ci,k,k]; `bias` may be
/// undefined (no bias) or hold Co values.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    ConvGeometry geometry, Tape* tape = nullptr);

/// Adjoint of conv2d for the same geometry. `weight` is [Ci,Co,k,k] and the
/// output extent is (H-1)*stride - 2*padding + k.
template <typename Real>
Tensor<Real> transposed_conv2d(const Tensor<Real>& input, const Tensor<Real>& weight,
                               const Tensor<Real>& bias, ConvGeometry geometry,
                               Tape* tape = nullptr);

/// 2x2 window, stride 2. Ties resolve to the first element in row-major order.
template <typename Real>
Tensor<Real> max_pool2d(const Tensor<Real>& input, Tape* tape = nullptr);

template <typename Real>
struct BatchNormStats {
  Tensor<Real> running_mean;  // [1,C,1,1]
  Tensor<Real> running_var;   // [1,C,1,1]

  static BatchNormStats fresh(std::size_t channels);
};

struct BatchNormOptions {
  bool training = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalization over (N,H,W). Training mode uses batch
/// statistics and folds them into `stats` (running variance uses the unbiased
/// estimate); eval mode normalizes with `stats` and leaves it untouched.
template <typename Real>
Tensor<Real> batch_norm(const Tensor<Real>& input, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, BatchNormStats<Real>& stats,
                        BatchNormOptions options, Tape* tape = nullptr);

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& input, Tape* tape = nullptr);

/// Output is kept inside the open interval (0,1) even where the exact value
/// rounds to an endpoint.
template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& input, Tape* tape = nullptr);

template <typename Real>
Tensor<Real> concat_channels(std::span<const Tensor<Real>> parts, Tape* tape = nullptr);

/// Centered spatial window; an odd surplus drops the extra row/column from the
/// bottom/right.
template <typename Real>
Tensor<Real> center_crop(const Tensor<Real>& input, std::size_t target_h, std::size_t target_w,
                         Tape* tape = nullptr);

enum class CombineMode { add, gate };

/// add: a + alpha*b.  gate: a * (1 + alpha*b). alpha is a constant.
template <typename Real>
Tensor<Real> scale_combine(const Tensor<Real>& a, const Tensor<Real>& b, double alpha,
                           CombineMode mode, Tape* tape = nullptr);

/// Nearest-neighbour upsampling by an integer factor.
template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& input, std::size_t factor,
                              Tape* tape = nullptr);

/// Mean over pixels of -[g log s + (1-g) log(1-s)] with s clamped to
/// [clamp, 1-clamp]. Targets must be exactly 0 or 1.
template <typename Real>
Tensor<Real> binary_cross_entropy(const Tensor<Real>& prediction, const Tensor<Real>& target,
                                  double clamp = 1e-7, Tape* tape = nullptr);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& input, Tape* tape = nullptr);

/// Sum of w_i * s_i over scalar tensors.
template <typename Real>
Tensor<Real> weighted_sum(std::span<const Tensor<Real>> scalars, std::span<const double> weights,
                          Tape* tape = nullptr);

/// Sum of r ⊙ x with a constant weight tensor r; used to reduce an operator's
/// output to a scalar probe in gradient checks.
template <typename Real>
Tensor<Real> dot_constant(const Tensor<Real>& input, const Tensor<Real>& weights,
                          Tape* tape = nullptr);

}  // namespace pdnet::ops
