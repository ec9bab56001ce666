#include "pdnet/tape.hpp"

namespace pdnet {

void Tape::record(BackwardFn fn) {
  if (consumed_) throw AutodiffError("cannot record onto a consumed tape; call reset() first");
  nodes_.push_back(std::move(fn));
}

void Tape::clear() {
  nodes_.clear();
  nodes_.shrink_to_fit();
  consumed_ = true;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

template <typename Real>
void backward(const Tensor<Real>& loss, Tape& tape) {
  if (tape.consumed()) throw AutodiffError("backward on a consumed tape");
  if (loss.numel() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " + loss.shape().str());
  }
  if (!loss.requires_grad()) throw AutodiffError("loss does not depend on any tracked tensor");
  Tensor<Real> seed = loss;
  seed.grad()[0] += Real(1);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) (*it)();
  tape.clear();
}

template void backward<float>(const Tensor<float>&, Tape&);
template void backward<double>(const Tensor<double>&, Tape&);

}  // namespace pdnet
