#include "pdnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pdnet {

namespace {

template <typename Real>
std::vector<std::vector<double>> analytic_gradients(const ScalarFn<Real>& f, std::span<Tensor<Real>> inputs) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) x.set_requires_grad(true);
    x.zero_grad();
  }
  Tape tape;
  backward(f(&tape), tape);
  std::vector<std::vector<double>> grads;
  for (const auto& x : inputs) grads.emplace_back(x.grad().begin(), x.grad().end());
  return grads;
}

template <typename Real>
GradCheckReport compare(const std::vector<std::vector<double>>& analytic, const ScalarFn<Real>& f,
                        std::span<Tensor<Real>> inputs, double eps, std::span<const double> retry_steps,
                        double retry_above) {
  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const Real saved = data[j];
      const double a = analytic[i][j];
      auto eval_at = [&](double h) {
        data[j] = static_cast<Real>(saved + h);
        const double v = f(nullptr).item();
        data[j] = saved;
        return v;
      };
      auto central = [&](double h) { return (eval_at(h) - eval_at(-h)) / (2.0 * h); };
      auto rel = [&](double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
      double numeric = central(eps);
      double err = rel(numeric);
      auto consider = [&](double n) {
        if (rel(n) < err) {
          numeric = n;
          err = rel(n);
        }
      };
      double base = NAN;
      for (double h : retry_steps) {
        if (!(err > retry_above)) break;
        const double up = eval_at(h);
        const double down = eval_at(-h);
        consider((up - down) / (2.0 * h));
        if (!(err > retry_above)) break;
        // Richardson over h and h/2 cancels the h^2 truncation term.
        consider((4.0 * central(h / 2) - (up - down) / (2.0 * h)) / 3.0);
        if (!(err > retry_above)) break;
        // A kink closer than h lies on one side only; the other one-sided
        // difference is still a derivative estimate.
        if (std::isnan(base)) base = f(nullptr).item();
        consider((up - base) / h);
        consider((base - down) / h);
      }
      ++report.coordinates;
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        report.worst_input = i;
        report.worst_offset = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace

template <typename Real>
GradCheckReport grad_check(const ScalarFn<Real>& f, std::span<Tensor<Real>> inputs, double eps,
                           std::span<const double> retry_steps, double retry_above) {
  return compare(analytic_gradients(f, inputs), f, inputs, eps, retry_steps, retry_above);
}

template <typename Real, typename Ref>
GradCheckReport grad_check_mixed(const ScalarFn<Real>& f, std::span<Tensor<Real>> inputs,
                                 const ScalarFn<Ref>& reference, std::span<Tensor<Ref>> reference_inputs, double eps,
                                 std::span<const double> retry_steps, double retry_above) {
  if (inputs.size() != reference_inputs.size()) {
    throw ShapeError("grad_check_mixed: input lists differ in length");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != reference_inputs[i].shape()) {
      throw ShapeError("grad_check_mixed: reference input " + std::to_string(i) + " has shape " +
                       reference_inputs[i].shape().str());
    }
    std::copy(inputs[i].data().begin(), inputs[i].data().end(), reference_inputs[i].data().begin());
  }
  return compare(analytic_gradients(f, inputs), reference, reference_inputs, eps, retry_steps, retry_above);
}

template GradCheckReport grad_check<float>(const ScalarFn<float>&, std::span<Tensor<float>>, double,
                                           std::span<const double>, double);
template GradCheckReport grad_check<double>(const ScalarFn<double>&, std::span<Tensor<double>>, double,
                                            std::span<const double>, double);

template GradCheckReport grad_check_mixed<float, double>(const ScalarFn<float>&, std::span<Tensor<float>>,
                                                         const ScalarFn<double>&, std::span<Tensor<double>>, double,
                                                         std::span<const double>, double);

}  // namespace pdnet
