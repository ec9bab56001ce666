#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdnet/error.hpp"

namespace pdnet {

/// Extents of a dense NCHW tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense 4-D tensor with an optional gradient buffer.
///
/// A Tensor is a cheap handle onto shared storage: copies alias the same
/// data, `clone()` makes an independent deep copy. Operators never mutate
/// their inputs' data, so forward results can be shared read-only.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t numel() const { return impl().shape.numel(); }

  std::span<Real> data() { return impl().data; }
  std::span<const Real> data() const { return impl().data; }

  /// Empty unless requires_grad() is set.
  std::span<Real> grad() { return impl().grad; }
  std::span<const Real> grad() const { return impl().grad; }

  bool requires_grad() const { return impl().requires_grad; }
  /// Enabling allocates a zeroed gradient buffer; disabling drops it.
  Tensor& set_requires_grad(bool flag);
  void zero_grad();

  Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return impl().data[index(n, c, h, w)];
  }
  Real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return impl().data[index(n, c, h, w)];
  }
  Real item() const;

  /// Deep copy without gradient tracking.
  Tensor clone() const;
  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(numel());
    std::copy(data().begin(), data().end(), out.begin());
    return Tensor<Other>::from_data(shape(), std::move(out));
  }

  /// Identity of the underlying storage.
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = impl().shape;
    return ((n * s.c + c) * s.h + h) * s.w + w;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
  };

  Impl& impl() const {
    if (!impl_) throw ShapeError("use of an undefined tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace pdnet
