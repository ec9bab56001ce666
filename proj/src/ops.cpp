#include "pdnet/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <sstream>

namespace pdnet::ops {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

template <typename Real>
bool tracks(const Tape* tape, std::initializer_list<const Tensor<Real>*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor<Real>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

struct Window {
  std::size_t n, c, h, w;  // source extents
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;

  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return n * out_h * out_w; }
};

// Unfolds [N,C,H,W] into a (C*k*k) x (N*Ho*Wo) row-major matrix.
template <typename Real>
void im2col(const Real* src, const Window& g, Real* col) {
  const std::size_t cols = g.cols();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        Real* row = col + ((ci * g.k + ki) * g.k + kj) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const Real* plane = src + (n * g.c + ci) * g.h * g.w;
          Real* dst = row + n * g.out_h * g.out_w;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                            static_cast<std::ptrdiff_t>(g.pad);
            Real* out_row = dst + oh * g.out_w;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(out_row, out_row + g.out_w, Real(0));
              continue;
            }
            const Real* in_row = plane + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                              static_cast<std::ptrdiff_t>(g.pad);
              out_row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
                                ? Real(0)
                                : in_row[static_cast<std::size_t>(iw)];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters and accumulates columns back into [N,C,H,W].
template <typename Real>
void col2im(const Real* col, const Window& g, Real* dst) {
  const std::size_t cols = g.cols();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const Real* row = col + ((ci * g.k + ki) * g.k + kj) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          Real* plane = dst + (n * g.c + ci) * g.h * g.w;
          const Real* src = row + n * g.out_h * g.out_w;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
            Real* out_row = plane + static_cast<std::size_t>(ih) * g.w;
            const Real* in_row = src + oh * g.out_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
              out_row[static_cast<std::size_t>(iw)] += in_row[ow];
            }
          }
        }
      }
    }
  }
}

// [N,C,H,W] <-> C x (N*H*W) row-major.
template <typename Real>
void nchw_to_channel_major(std::span<const Real> src, const Shape& s, Real* dst) {
  const std::size_t plane = s.plane();
  const std::size_t cols = s.n * plane;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      std::copy_n(src.data() + (n * s.c + c) * plane, plane, dst + c * cols + n * plane);
    }
  }
}

template <typename Real>
void channel_major_to_nchw(const Real* src, const Shape& s, std::span<Real> dst, bool accumulate) {
  const std::size_t plane = s.plane();
  const std::size_t cols = s.n * plane;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const Real* from = src + c * cols + n * plane;
      Real* to = dst.data() + (n * s.c + c) * plane;
      if (accumulate) {
        for (std::size_t i = 0; i < plane; ++i) to[i] += from[i];
      } else {
        std::copy_n(from, plane, to);
      }
    }
  }
}

template <typename Real>
void check_bias(const std::string& op, const Tensor<Real>& bias, std::size_t channels) {
  if (bias.defined() && bias.numel() != channels) {
    std::ostringstream os;
    os << "bias has " << bias.numel() << " values, expected " << channels;
    shape_error(op, os.str());
  }
}

template <typename Real>
void add_bias(Tensor<Real>& out, const Tensor<Real>& bias) {
  if (!bias.defined()) return;
  const Shape& s = out.shape();
  auto data = out.data();
  auto b = bias.data();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      Real* p = data.data() + (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] += b[c];
    }
  }
}

template <typename Real>
void accumulate_bias_grad(const Tensor<Real>& out, Tensor<Real>& bias) {
  if (!bias.defined() || !bias.requires_grad()) return;
  const Shape& s = out.shape();
  auto g = out.grad();
  auto bg = bias.grad();
  for (std::size_t c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const Real* p = g.data() + (n * s.c + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
    }
    bg[c] += static_cast<Real>(acc);
  }
}

}  // namespace

// ============================================================================
// Convolutions
// ============================================================================

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    ConvGeometry geometry, Tape* tape) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) shape_error("conv2d", "kernel must be square, got " + ws.str());
  if (ws.c != xs.c) {
    std::ostringstream os;
    os << "weight expects " << ws.c << " input channels but input " << xs.str() << " has " << xs.c;
    shape_error("conv2d", os.str());
  }
  if (geometry.stride == 0) shape_error("conv2d", "stride must be positive");
  const std::size_t k = ws.h;
  if (xs.h + 2 * geometry.padding < k || xs.w + 2 * geometry.padding < k) {
    shape_error("conv2d", "padded input " + xs.str() + " smaller than kernel " + ws.str());
  }
  check_bias("conv2d", bias, ws.n);

  const Window g{xs.n,
                 xs.c,
                 xs.h,
                 xs.w,
                 k,
                 geometry.stride,
                 geometry.padding,
                 (xs.h + 2 * geometry.padding - k) / geometry.stride + 1,
                 (xs.w + 2 * geometry.padding - k) / geometry.stride + 1};
  const Shape out_shape{xs.n, ws.n, g.out_h, g.out_w};
  if (out_shape.numel() == 0) shape_error("conv2d", "zero-size output for input " + xs.str());

  const bool track = tracks<Real>(tape, {&input, &weight, &bias});
  Tensor<Real> out = Tensor<Real>::zeros(out_shape, track);

  std::vector<Real> col(g.rows() * g.cols());
  im2col(input.data().data(), g, col.data());
  std::vector<Real> prod(ws.n * g.cols());
  ConstMatMap<Real> wmat(weight.data().data(), ws.n, g.rows());
  ConstMatMap<Real> cmat(col.data(), g.rows(), g.cols());
  MatMap<Real>(prod.data(), ws.n, g.cols()).noalias() = wmat * cmat;
  channel_major_to_nchw<Real>(prod.data(), out_shape, out.data(), false);
  add_bias(out, bias);

  if (track) {
    tape->record([input = Tensor<Real>(input), weight = Tensor<Real>(weight), bias = Tensor<Real>(bias), out, g]() mutable {
      const Shape& os = out.shape();
      std::vector<Real> dout(os.c * g.cols());
      nchw_to_channel_major<Real>(out.grad(), os, dout.data());
      ConstMatMap<Real> dmat(dout.data(), os.c, g.cols());
      if (weight.requires_grad() || input.requires_grad()) {
        std::vector<Real> col(g.rows() * g.cols());
        if (weight.requires_grad()) {
          im2col(input.data().data(), g, col.data());
          ConstMatMap<Real> cmat(col.data(), g.rows(), g.cols());
          MatMap<Real>(weight.grad().data(), os.c, g.rows()).noalias() += dmat * cmat.transpose();
        }
        if (input.requires_grad()) {
          ConstMatMap<Real> wmat(weight.data().data(), os.c, g.rows());
          MatMap<Real>(col.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * dmat;
          col2im(col.data(), g, input.grad().data());
        }
      }
      accumulate_bias_grad(out, bias);
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> transposed_conv2d(const Tensor<Real>& input, const Tensor<Real>& weight,
                               const Tensor<Real>& bias, ConvGeometry geometry, Tape* tape) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) shape_error("transposed_conv2d", "kernel must be square, got " + ws.str());
  if (ws.n != xs.c) {
    std::ostringstream os;
    os << "weight expects " << ws.n << " input channels but input " << xs.str() << " has " << xs.c;
    shape_error("transposed_conv2d", os.str());
  }
  if (geometry.stride == 0) shape_error("transposed_conv2d", "stride must be positive");
  check_bias("transposed_conv2d", bias, ws.c);
  const std::size_t k = ws.h;
  const auto extent = [&](std::size_t in) {
    return static_cast<std::ptrdiff_t>((in - 1) * geometry.stride + k) -
           static_cast<std::ptrdiff_t>(2 * geometry.padding);
  };
  if (xs.h == 0 || xs.w == 0 || extent(xs.h) <= 0 || extent(xs.w) <= 0) {
    shape_error("transposed_conv2d", "non-positive output extent for input " + xs.str());
  }
  const Shape out_shape{xs.n, ws.c, static_cast<std::size_t>(extent(xs.h)),
                        static_cast<std::size_t>(extent(xs.w))};
  // Geometry of the forward convolution this operator is the adjoint of.
  const Window g{xs.n, ws.c, out_shape.h, out_shape.w, k, geometry.stride, geometry.padding,
                 xs.h, xs.w};

  const bool track = tracks<Real>(tape, {&input, &weight, &bias});
  Tensor<Real> out = Tensor<Real>::zeros(out_shape, track);

  std::vector<Real> xmat(xs.c * g.cols());
  nchw_to_channel_major<Real>(input.data(), xs, xmat.data());
  std::vector<Real> col(g.rows() * g.cols());
  ConstMatMap<Real> wmat(weight.data().data(), ws.n, g.rows());
  MatMap<Real>(col.data(), g.rows(), g.cols()).noalias() =
      wmat.transpose() * ConstMatMap<Real>(xmat.data(), xs.c, g.cols());
  col2im(col.data(), g, out.data().data());
  add_bias(out, bias);

  if (track) {
    tape->record([input = Tensor<Real>(input), weight = Tensor<Real>(weight), bias = Tensor<Real>(bias), out, g]() mutable {
      const Shape& xs = input.shape();
      std::vector<Real> col(g.rows() * g.cols());
      im2col(out.grad().data(), g, col.data());
      ConstMatMap<Real> cmat(col.data(), g.rows(), g.cols());
      if (input.requires_grad()) {
        ConstMatMap<Real> wmat(weight.data().data(), xs.c, g.rows());
        std::vector<Real> dx(xs.c * g.cols());
        MatMap<Real>(dx.data(), xs.c, g.cols()).noalias() = wmat * cmat;
        channel_major_to_nchw<Real>(dx.data(), xs, input.grad(), true);
      }
      if (weight.requires_grad()) {
        std::vector<Real> xmat(xs.c * g.cols());
        nchw_to_channel_major<Real>(input.data(), xs, xmat.data());
        MatMap<Real>(weight.grad().data(), xs.c, g.rows()).noalias() +=
            ConstMatMap<Real>(xmat.data(), xs.c, g.cols()) * cmat.transpose();
      }
      accumulate_bias_grad(out, bias);
    });
  }
  return out;
}

// ============================================================================
// Pooling and normalization
// ============================================================================

template <typename Real>
Tensor<Real> max_pool2d(const Tensor<Real>& input, Tape* tape) {
  const Shape& xs = input.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0 || xs.h == 0 || xs.w == 0) {
    shape_error("max_pool2d", "spatial extents must be even and positive, got " + xs.str());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::zeros(os, track);
  std::vector<std::size_t> argmax(os.numel());
  auto x = input.data();
  auto y = out.data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const std::size_t base = nc * xs.plane();
    for (std::size_t i = 0; i < os.h; ++i) {
      for (std::size_t j = 0; j < os.w; ++j, ++o) {
        std::size_t best = base + (2 * i) * xs.w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * i + di) * xs.w + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        argmax[o] = best;
        y[o] = x[best];
      }
    }
  }
  if (track) {
    tape->record([input = Tensor<Real>(input), out, argmax = std::move(argmax)]() mutable {
      auto gx = input.grad();
      auto gy = out.grad();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += gy[i];
    });
  }
  return out;
}

template <typename Real>
BatchNormStats<Real> BatchNormStats<Real>::fresh(std::size_t channels) {
  return {Tensor<Real>::zeros({1, channels, 1, 1}), Tensor<Real>::full({1, channels, 1, 1}, 1)};
}

template <typename Real>
Tensor<Real> batch_norm(const Tensor<Real>& input, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, BatchNormStats<Real>& stats,
                        BatchNormOptions options, Tape* tape) {
  const Shape& xs = input.shape();
  const std::size_t channels = xs.c;
  if (gamma.numel() != channels || beta.numel() != channels ||
      stats.running_mean.numel() != channels || stats.running_var.numel() != channels) {
    std::ostringstream os;
    os << "affine/statistics length does not match " << channels << " channels of " << xs.str();
    shape_error("batch_norm", os.str());
  }
  const std::size_t count = xs.n * xs.plane();
  if (options.training && count < 2) {
    shape_error("batch_norm", "training mode needs at least 2 values per channel, got " + xs.str());
  }

  std::vector<Real> mean(channels);
  std::vector<Real> inv_std(channels);
  auto x = input.data();
  for (std::size_t c = 0; c < channels; ++c) {
    if (options.training) {
      double s = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const Real* p = x.data() + (n * channels + c) * xs.plane();
        for (std::size_t i = 0; i < xs.plane(); ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < xs.n; ++n) {
        const Real* p = x.data() + (n * channels + c) * xs.plane();
        for (std::size_t i = 0; i < xs.plane(); ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = static_cast<Real>(mu);
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(var + options.eps));
      const double unbiased = ss / static_cast<double>(count - 1);
      auto rm = stats.running_mean.data();
      auto rv = stats.running_var.data();
      rm[c] = static_cast<Real>((1.0 - options.momentum) * rm[c] + options.momentum * mu);
      rv[c] = static_cast<Real>((1.0 - options.momentum) * rv[c] + options.momentum * unbiased);
    } else {
      mean[c] = stats.running_mean.data()[c];
      inv_std[c] = static_cast<Real>(1.0 / std::sqrt(double(stats.running_var.data()[c]) + options.eps));
    }
  }

  const bool track = tracks<Real>(tape, {&input, &gamma, &beta});
  Tensor<Real> out = Tensor<Real>::zeros(xs, track);
  auto y = out.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * xs.plane();
      for (std::size_t i = 0; i < xs.plane(); ++i) {
        y[off + i] = gm[c] * (x[off + i] - mean[c]) * inv_std[c] + bt[c];
      }
    }
  }

  if (track) {
    const bool training = options.training;
    tape->record([input = Tensor<Real>(input), gamma = Tensor<Real>(gamma), beta = Tensor<Real>(beta), out, mean = std::move(mean), inv_std = std::move(inv_std), training]() mutable {
      const Shape& xs = input.shape();
      const std::size_t channels = xs.c;
      const std::size_t plane = xs.plane();
      const double count = static_cast<double>(xs.n * plane);
      auto x = input.data();
      auto gy = out.grad();
      auto gm = gamma.data();
      for (std::size_t c = 0; c < channels; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < xs.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (double(x[off + i]) - mean[c]) * inv_std[c];
            sum_dy += gy[off + i];
            sum_dy_xhat += gy[off + i] * xhat;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += static_cast<Real>(sum_dy_xhat);
        if (beta.requires_grad()) beta.grad()[c] += static_cast<Real>(sum_dy);
        if (!input.requires_grad()) continue;
        auto gx = input.grad();
        const double g = gm[c];
        const double is = inv_std[c];
        for (std::size_t n = 0; n < xs.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            if (training) {
              const double xhat = (double(x[off + i]) - mean[c]) * is;
              gx[off + i] += static_cast<Real>(
                  g * is * (gy[off + i] - sum_dy / count - xhat * sum_dy_xhat / count));
            } else {
              gx[off + i] += static_cast<Real>(g * is * gy[off + i]);
            }
          }
        }
      }
    });
  }
  return out;
}

// ============================================================================
// Elementwise
// ============================================================================

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& input, Tape* tape) {
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::zeros(input.shape(), track);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
  if (track) {
    tape->record([input = Tensor<Real>(input), out]() mutable {
      auto x = input.data();
      auto gx = input.grad();
      auto gy = out.grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > Real(0)) gx[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& input, Tape* tape) {
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::zeros(input.shape(), track);
  const Real lo = std::numeric_limits<Real>::min();
  const Real hi = std::nextafter(Real(1), Real(0));
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    Real s;
    if (x[i] >= Real(0)) {
      s = Real(1) / (Real(1) + std::exp(-x[i]));
    } else {
      const Real e = std::exp(x[i]);
      s = e / (Real(1) + e);
    }
    y[i] = std::clamp(s, lo, hi);
  }
  if (track) {
    tape->record([input = Tensor<Real>(input), out]() mutable {
      auto y = out.data();
      auto gy = out.grad();
      auto gx = input.grad();
      for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (Real(1) - y[i]);
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> scale_combine(const Tensor<Real>& a, const Tensor<Real>& b, double alpha,
                           CombineMode mode, Tape* tape) {
  if (a.shape() != b.shape()) {
    shape_error("scale_combine", "operand shapes differ: " + a.shape().str() + " vs " + b.shape().str());
  }
  const bool track = tracks<Real>(tape, {&a, &b});
  Tensor<Real> out = Tensor<Real>::zeros(a.shape(), track);
  const Real k = static_cast<Real>(alpha);
  auto x = a.data();
  auto d = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = mode == CombineMode::add ? x[i] + k * d[i] : x[i] * (Real(1) + k * d[i]);
  }
  if (track) {
    tape->record([a = Tensor<Real>(a), b = Tensor<Real>(b), out, k, mode]() mutable {
      auto gy = out.grad();
      auto x = a.data();
      auto d = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += mode == CombineMode::add ? gy[i] : gy[i] * (Real(1) + k * d[i]);
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          gb[i] += mode == CombineMode::add ? k * gy[i] : k * x[i] * gy[i];
        }
      }
    });
  }
  return out;
}

// ============================================================================
// Layout
// ============================================================================

template <typename Real>
Tensor<Real> concat_channels(std::span<const Tensor<Real>> parts, Tape* tape) {
  if (parts.empty()) shape_error("concat_channels", "empty part list");
  const Shape& first = parts.front().shape();
  std::size_t channels = 0;
  bool track = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      shape_error("concat_channels", "part " + s.str() + " does not match N/H/W of " + first.str());
    }
    channels += s.c;
    track = track || tracks<Real>(tape, {&p});
  }
  const Shape os{first.n, channels, first.h, first.w};
  Tensor<Real> out = Tensor<Real>::zeros(os, track);
  auto y = out.data();
  const std::size_t plane = first.plane();
  for (std::size_t n = 0; n < os.n; ++n) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.shape().c * plane;
      std::copy_n(p.data().data() + n * len, len, y.data() + (n * channels + c0) * plane);
      c0 += p.shape().c;
    }
  }
  if (track) {
    tape->record([parts = std::vector<Tensor<Real>>(parts.begin(), parts.end()), out]() mutable {
      const Shape& os = out.shape();
      const std::size_t plane = os.plane();
      auto gy = out.grad();
      for (std::size_t n = 0; n < os.n; ++n) {
        std::size_t c0 = 0;
        for (auto& p : parts) {
          const std::size_t len = p.shape().c * plane;
          if (p.requires_grad()) {
            const Real* src = gy.data() + (n * os.c + c0) * plane;
            Real* dst = p.grad().data() + n * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
          c0 += p.shape().c;
        }
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> center_crop(const Tensor<Real>& input, std::size_t target_h, std::size_t target_w,
                         Tape* tape) {
  const Shape& xs = input.shape();
  if (target_h > xs.h || target_w > xs.w) {
    std::ostringstream os;
    os << "target " << target_h << 'x' << target_w << " exceeds input " << xs.str();
    shape_error("center_crop", os.str());
  }
  const std::size_t top = (xs.h - target_h) / 2;
  const std::size_t left = (xs.w - target_w) / 2;
  const Shape os{xs.n, xs.c, target_h, target_w};
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::zeros(os, track);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    for (std::size_t i = 0; i < target_h; ++i) {
      std::copy_n(x.data() + nc * xs.plane() + (top + i) * xs.w + left, target_w,
                  y.data() + nc * os.plane() + i * target_w);
    }
  }
  if (track) {
    tape->record([input = Tensor<Real>(input), out, top, left]() mutable {
      const Shape& xs = input.shape();
      const Shape& os = out.shape();
      auto gx = input.grad();
      auto gy = out.grad();
      for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
        for (std::size_t i = 0; i < os.h; ++i) {
          Real* dst = gx.data() + nc * xs.plane() + (top + i) * xs.w + left;
          const Real* src = gy.data() + nc * os.plane() + i * os.w;
          for (std::size_t j = 0; j < os.w; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& input, std::size_t factor, Tape* tape) {
  if (factor == 0) shape_error("upsample_nearest", "factor must be positive");
  const Shape& xs = input.shape();
  const Shape os{xs.n, xs.c, xs.h * factor, xs.w * factor};
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::zeros(os, track);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    for (std::size_t i = 0; i < os.h; ++i) {
      for (std::size_t j = 0; j < os.w; ++j) {
        y[nc * os.plane() + i * os.w + j] = x[nc * xs.plane() + (i / factor) * xs.w + j / factor];
      }
    }
  }
  if (track) {
    tape->record([input = Tensor<Real>(input), out, factor]() mutable {
      const Shape& xs = input.shape();
      const Shape& os = out.shape();
      auto gx = input.grad();
      auto gy = out.grad();
      for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
        for (std::size_t i = 0; i < os.h; ++i) {
          for (std::size_t j = 0; j < os.w; ++j) {
            gx[nc * xs.plane() + (i / factor) * xs.w + j / factor] += gy[nc * os.plane() + i * os.w + j];
          }
        }
      }
    });
  }
  return out;
}

// ============================================================================
// Reductions and losses
// ============================================================================

template <typename Real>
Tensor<Real> binary_cross_entropy(const Tensor<Real>& prediction, const Tensor<Real>& target,
                                  double clamp, Tape* tape) {
  if (prediction.shape() != target.shape()) {
    shape_error("binary_cross_entropy",
                "prediction " + prediction.shape().str() + " vs target " + target.shape().str());
  }
  if (prediction.numel() == 0) shape_error("binary_cross_entropy", "empty input");
  auto s = prediction.data();
  auto g = target.data();
  const double lo = clamp;
  const double hi = 1.0 - clamp;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g[i] != Real(0) && g[i] != Real(1)) {
      std::ostringstream os;
      os << "target value " << g[i] << " at flat index " << i << " is not binary";
      throw DataError("binary_cross_entropy: " + os.str());
    }
    const double p = std::clamp<double>(s[i], lo, hi);
    acc -= g[i] != Real(0) ? std::log(p) : std::log(1.0 - p);
  }
  const double count = static_cast<double>(s.size());
  const bool track = tracks<Real>(tape, {&prediction});
  Tensor<Real> out = Tensor<Real>::scalar(static_cast<Real>(acc / count), track);
  if (track) {
    tape->record([prediction = Tensor<Real>(prediction), target = Tensor<Real>(target), out, lo, hi, count]() mutable {
      auto s = prediction.data();
      auto g = target.data();
      auto gs = prediction.grad();
      const double up = out.grad()[0] / count;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = s[i];
        if (p < lo || p > hi) continue;
        gs[i] += static_cast<Real>(g[i] != Real(0) ? -up / p : up / (1.0 - p));
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& input, Tape* tape) {
  double acc = 0.0;
  for (Real v : input.data()) acc += v;
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::scalar(static_cast<Real>(acc), track);
  if (track) {
    tape->record([input = Tensor<Real>(input), out]() mutable {
      const Real up = out.grad()[0];
      for (Real& g : input.grad()) g += up;
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> weighted_sum(std::span<const Tensor<Real>> scalars, std::span<const double> weights,
                          Tape* tape) {
  if (scalars.size() != weights.size()) {
    shape_error("weighted_sum", "term and weight counts differ");
  }
  double acc = 0.0;
  bool track = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].numel() != 1) shape_error("weighted_sum", "term " + scalars[i].shape().str() + " is not scalar");
    acc += weights[i] * scalars[i].data()[0];
    track = track || tracks<Real>(tape, {&scalars[i]});
  }
  Tensor<Real> out = Tensor<Real>::scalar(static_cast<Real>(acc), track);
  if (track) {
    tape->record([terms = std::vector<Tensor<Real>>(scalars.begin(), scalars.end()), w = std::vector<double>(weights.begin(), weights.end()), out]() mutable {
      const double up = out.grad()[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].requires_grad()) terms[i].grad()[0] += static_cast<Real>(w[i] * up);
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> dot_constant(const Tensor<Real>& input, const Tensor<Real>& weights, Tape* tape) {
  if (input.shape() != weights.shape()) {
    shape_error("dot_constant", input.shape().str() + " vs " + weights.shape().str());
  }
  double acc = 0.0;
  auto x = input.data();
  auto r = weights.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += double(x[i]) * double(r[i]);
  const bool track = tracks<Real>(tape, {&input});
  Tensor<Real> out = Tensor<Real>::scalar(static_cast<Real>(acc), track);
  if (track) {
    tape->record([input = Tensor<Real>(input), weights = Tensor<Real>(weights), out]() mutable {
      const Real up = out.grad()[0];
      auto r = weights.data();
      auto g = input.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * r[i];
    });
  }
  return out;
}

#define PDNET_INSTANTIATE_OPS(Real)                                                              \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,     \
                               ConvGeometry, Tape*);                                              \
  template Tensor<Real> transposed_conv2d(const Tensor<Real>&, const Tensor<Real>&,               \
                                          const Tensor<Real>&, ConvGeometry, Tape*);              \
  template Tensor<Real> max_pool2d(const Tensor<Real>&, Tape*);                                   \
  template struct BatchNormStats<Real>;                                                           \
  template Tensor<Real> batch_norm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, \
                                   BatchNormStats<Real>&, BatchNormOptions, Tape*);               \
  template Tensor<Real> relu(const Tensor<Real>&, Tape*);                                         \
  template Tensor<Real> sigmoid(const Tensor<Real>&, Tape*);                                      \
  template Tensor<Real> concat_channels(std::span<const Tensor<Real>>, Tape*);                    \
  template Tensor<Real> center_crop(const Tensor<Real>&, std::size_t, std::size_t, Tape*);        \
  template Tensor<Real> scale_combine(const Tensor<Real>&, const Tensor<Real>&, double,           \
                                      CombineMode, Tape*);                                        \
  template Tensor<Real> upsample_nearest(const Tensor<Real>&, std::size_t, Tape*);                \
  template Tensor<Real> binary_cross_entropy(const Tensor<Real>&, const Tensor<Real>&, double,    \
                                             Tape*);                                              \
  template Tensor<Real> sum(const Tensor<Real>&, Tape*);                                          \
  template Tensor<Real> weighted_sum(std::span<const Tensor<Real>>, std::span<const double>,      \
                                     Tape*);                                                      \
  template Tensor<Real> dot_constant(const Tensor<Real>&, const Tensor<Real>&, Tape*);

PDNET_INSTANTIATE_OPS(float)
PDNET_INSTANTIATE_OPS(double)

#undef PDNET_INSTANTIATE_OPS

}  // namespace pdnet::ops
