#include "pdnet/tensor.hpp"

#include <sstream>

namespace pdnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
  return os.str();
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(shape, Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  return from_data(shape, std::vector<Real>(shape.numel(), value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (data.size() != shape.numel()) {
    std::ostringstream os;
    os << "tensor data length " << data.size() << " does not match shape " << shape.str();
    throw ShapeError(os.str());
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = shape;
  t.impl_->data = std::move(data);
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return full({1, 1, 1, 1}, value, requires_grad);
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool flag) {
  Impl& self = impl();
  self.requires_grad = flag;
  if (flag) {
    self.grad.assign(self.data.size(), Real(0));
  } else {
    self.grad.clear();
    self.grad.shrink_to_fit();
  }
  return *this;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(impl().grad.begin(), impl().grad.end(), Real(0));
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return impl().data[0];
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return from_data(shape(), std::vector<Real>(data().begin(), data().end()));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pdnet
