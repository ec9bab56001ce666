#pragma once

#include <functional>
#include <vector>

#include "pdnet/tensor.hpp"

namespace pdnet {

/// Ordered record of differentiable operations executed in a forward pass.
///
/// Each entry owns a closure holding the tensors and intermediates its
/// backward rule needs. Running backward replays the entries in reverse
/// order exactly once and then releases them; the tape stays consumed until
/// reset().
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Frees saved intermediates. A cleared tape cannot be replayed.
  void clear();
  /// Clears and makes the tape usable for a new forward pass.
  void reset();

 private:
  template <typename Real>
  friend void backward(const Tensor<Real>& loss, Tape& tape);

  std::vector<BackwardFn> nodes_;
  bool consumed_ = false;
};

/// Reverse-mode accumulation from a scalar loss. Gradients are added into the
/// grad buffers of every requires_grad tensor reachable from `loss`.
template <typename Real>
void backward(const Tensor<Real>& loss, Tape& tape);

extern template void backward<float>(const Tensor<float>&, Tape&);
extern template void backward<double>(const Tensor<double>&, Tape&);

}  // namespace pdnet
