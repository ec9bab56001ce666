#include "pdnet/adam.hpp"

#include <cmath>

#include "pdnet/error.hpp"

namespace pdnet {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::master_encoder:
      return "master_encoder";
    case ParamGroup::master_decoder:
      return "master_decoder";
    case ParamGroup::subnet:
      return "subnet";
  }
  return "unknown";
}

namespace {

template <typename Real>
bool updatable(const Parameter<Real>& p) {
  return p.trainable && !p.frozen && p.value.requires_grad();
}

}  // namespace

template <typename Real>
void adam_step(std::span<Parameter<Real>> params, AdamState<Real>& state, double lr) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state was created for a different parameter list");
  }
  for (const auto& p : params) {
    if (!updatable(p)) continue;
    for (Real g : p.value.grad()) {
      if (!std::isfinite(g)) throw AutodiffError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!updatable(p)) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.empty()) {
      m.assign(p.value.numel(), 0.0);
      v.assign(p.value.numel(), 0.0);
    }
    if (m.size() != p.value.numel()) {
      throw ShapeError("adam_step: moment buffer size mismatch for '" + p.name + "'");
    }
    auto data = p.value.data();
    auto grad = p.value.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      data[j] = static_cast<Real>(data[j] - lr * m_hat / (std::sqrt(v_hat) + state.hyper.eps));
    }
  }
}

template <typename Real>
void zero_grads(std::span<Parameter<Real>> params) {
  for (auto& p : params) {
    if (p.value.requires_grad()) p.value.zero_grad();
  }
}

template void adam_step<float>(std::span<Parameter<float>>, AdamState<float>&, double);
template void adam_step<double>(std::span<Parameter<double>>, AdamState<double>&, double);
template void zero_grads<float>(std::span<Parameter<float>>);
template void zero_grads<double>(std::span<Parameter<double>>);

}  // namespace pdnet
