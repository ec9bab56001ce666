#include "pdnet/verify.hpp"

#include <functional>

#include "pdnet/grad_check.hpp"
#include "pdnet/ops.hpp"

namespace pdnet {
namespace {

// Retried steps for the piecewise-linear network: a fixed step crosses ReLU
// and max-pool kinks on a few coordinates.
constexpr double kRetrySteps[] = {1e-4, 1e-6, 1e-3, 1e-7, 1e-8};

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Real> data(shape.numel());
  for (Real& v : data) v = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor<Real>::from_data(shape, std::move(data));
}

// Distinct values at least `gap` apart, shuffled; keeps probes off kinks.
template <typename Real>
Tensor<Real> spaced_tensor(Shape shape, Rng& rng, double gap = 0.05) {
  const std::size_t n = shape.numel();
  std::vector<Real> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<Real>((static_cast<double>(i) - n / 2.0) * gap + gap / 2);
  for (std::size_t i = n; i > 1; --i) std::swap(data[i - 1], data[rng.below(i)]);
  return Tensor<Real>::from_data(shape, std::move(data));
}

template <typename Real>
Tensor<Real> mask_tensor(Shape shape, Rng& rng) {
  std::vector<Real> data(shape.numel());
  for (Real& v : data) v = rng.uniform() < 0.4 ? Real(1) : Real(0);
  return Tensor<Real>::from_data(shape, std::move(data));
}

template <typename Real>
struct OpCase {
  std::string name;
  std::vector<Tensor<Real>> inputs;
  std::function<Tensor<Real>(std::vector<Tensor<Real>>&, Tape*)> op;
};

template <typename Real>
std::vector<OpCase<Real>> op_cases(std::uint64_t seed) {
  Rng rng(seed);
  using T = Tensor<Real>;
  const Shape s{2, 2, 6, 6};
  std::vector<OpCase<Real>> cases;
  cases.push_back({"conv2d",
                   {uniform_tensor<Real>(s, rng), uniform_tensor<Real>({3, 2, 3, 3}, rng),
                    uniform_tensor<Real>({1, 3, 1, 1}, rng)},
                   [](auto& in, Tape* t) { return ops::conv2d(in[0], in[1], in[2], {1, 1}, t); }});
  cases.push_back({"conv2d_stride2",
                   {uniform_tensor<Real>(s, rng), uniform_tensor<Real>({3, 2, 3, 3}, rng)},
                   [](auto& in, Tape* t) { return ops::conv2d(in[0], in[1], T{}, {2, 1}, t); }});
  cases.push_back({"transposed_conv2d",
                   {uniform_tensor<Real>({2, 2, 3, 3}, rng), uniform_tensor<Real>({2, 3, 2, 2}, rng),
                    uniform_tensor<Real>({1, 3, 1, 1}, rng)},
                   [](auto& in, Tape* t) { return ops::transposed_conv2d(in[0], in[1], in[2], {2, 0}, t); }});
  cases.push_back({"max_pool2d", {spaced_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::max_pool2d(in[0], t); }});
  cases.push_back({"batch_norm_train",
                   {uniform_tensor<Real>(s, rng), uniform_tensor<Real>({1, 2, 1, 1}, rng, 0.5, 1.5),
                    uniform_tensor<Real>({1, 2, 1, 1}, rng)},
                   [](auto& in, Tape* t) {
                     auto st = ops::BatchNormStats<Real>::fresh(2);
                     return ops::batch_norm(in[0], in[1], in[2], st, {.training = true}, t);
                   }});
  cases.push_back({"batch_norm_eval",
                   {uniform_tensor<Real>(s, rng), uniform_tensor<Real>({1, 2, 1, 1}, rng, 0.5, 1.5),
                    uniform_tensor<Real>({1, 2, 1, 1}, rng)},
                   [](auto& in, Tape* t) {
                     auto st = ops::BatchNormStats<Real>::fresh(2);
                     st.running_mean.data()[0] = Real(0.2);
                     st.running_var.data()[1] = Real(2.5);
                     return ops::batch_norm(in[0], in[1], in[2], st, {.training = false}, t);
                   }});
  cases.push_back({"relu", {spaced_tensor<Real>(s, rng)}, [](auto& in, Tape* t) { return ops::relu(in[0], t); }});
  cases.push_back({"sigmoid", {uniform_tensor<Real>(s, rng, -4, 4)},
                   [](auto& in, Tape* t) { return ops::sigmoid(in[0], t); }});
  cases.push_back({"concat_channels", {uniform_tensor<Real>(s, rng), uniform_tensor<Real>({2, 1, 6, 6}, rng)},
                   [](auto& in, Tape* t) { return ops::concat_channels<Real>(in, t); }});
  cases.push_back({"center_crop", {uniform_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::center_crop(in[0], 3, 4, t); }});
  cases.push_back({"scale_combine_add", {uniform_tensor<Real>(s, rng), uniform_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::scale_combine(in[0], in[1], 0.7, ops::CombineMode::add, t); }});
  cases.push_back({"scale_combine_gate", {uniform_tensor<Real>(s, rng), uniform_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::scale_combine(in[0], in[1], 1.3, ops::CombineMode::gate, t); }});
  cases.push_back({"upsample_nearest", {uniform_tensor<Real>({2, 2, 3, 3}, rng)},
                   [](auto& in, Tape* t) { return ops::upsample_nearest(in[0], 2, t); }});
  {
    const T target = mask_tensor<Real>({2, 1, 4, 4}, rng);
    cases.push_back({"binary_cross_entropy", {uniform_tensor<Real>({2, 1, 4, 4}, rng, 0.05, 0.95)},
                     [target](auto& in, Tape* t) { return ops::binary_cross_entropy(in[0], target, 1e-7, t); }});
  }
  cases.push_back({"weighted_sum",
                   {uniform_tensor<Real>({1, 1, 1, 1}, rng), uniform_tensor<Real>({1, 1, 1, 1}, rng)},
                   [](auto& in, Tape* t) {
                     const double w[] = {0.6, -1.7};
                     return ops::weighted_sum<Real>(in, w, t);
                   }});
  return cases;
}

template <typename Real>
Tensor<Real> probe(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_tensor<Real>(shape, rng);
}

template <typename Real>
std::vector<Tensor<Real>> trainable_tensors(PDNetParams<Real>& p) {
  std::vector<Tensor<Real>> out;
  for (auto& q : p.list()) {
    if (q.trainable && !q.frozen) out.push_back(q.value);
  }
  return out;
}

struct EndToEnd {
  PDNetParams<double> pd;
  PDNetParams<float> pf;
  Tensord rgb, depth, gt;
};

EndToEnd end_to_end_setup(std::uint64_t seed) {
  Rng rng(seed), twin(seed);
  EndToEnd e{build_pdnet<double>(grad_check_master(), grad_check_subnet(), FusionSpec{}, rng),
             build_pdnet<float>(grad_check_master(), grad_check_subnet(), FusionSpec{}, twin), {}, {}, {}};
  // The float network takes the double network's values rounded to float.
  for (std::size_t i = 0; i < e.pd.list().size(); ++i) {
    auto src = e.pd.list()[i].value.data();
    auto dst = e.pf.list()[i].value.data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<float>(src[k]);
    for (std::size_t k = 0; k < src.size(); ++k) src[k] = static_cast<double>(dst[k]);
  }
  const std::size_t size = grad_check_master().input_size;
  e.rgb = uniform_tensor<double>({2, 3, size, size}, rng, 0, 1).cast<float>().cast<double>();
  e.depth = uniform_tensor<double>({2, 1, size, size}, rng, 0, 1).cast<float>().cast<double>();
  e.gt = mask_tensor<double>({2, 1, size, size}, rng);
  return e;
}

}  // namespace

MasterConfig grad_check_master() {
  MasterConfig m;
  m.stage_channels = {4, 8};
  m.convs_per_block = {2, 1};
  m.input_size = 16;
  return m;
}

SubNetConfig grad_check_subnet() {
  SubNetConfig s;
  s.stage_channels = {4, 8};
  s.fusion_stage = 1;
  return s;
}

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options) {
  std::vector<GradSuiteEntry> out;
  const std::size_t n_ops = op_cases<double>(0).size();
  for (std::size_t k = 0; k < n_ops; ++k) {
    GradSuiteEntry d{"", "double", 0.0, options.double_threshold, 0};
    GradSuiteEntry f{"", "float", 0.0, options.float_threshold, 0};
    for (std::size_t rep = 0; rep < options.op_seeds; ++rep) {
      const std::uint64_t seed = options.seed * 1000 + rep;
      auto dc = op_cases<double>(seed);
      auto fc = op_cases<float>(seed);
      auto twin = op_cases<double>(seed);
      d.name = f.name = dc[k].name;

      const Shape out_shape = dc[k].op(dc[k].inputs, nullptr).shape();
      const Tensord rd = probe<double>(out_shape, seed + 7919);
      const Tensorf rf = rd.cast<float>();
      const Tensord rf_twin = rf.cast<double>();

      auto& cd = dc[k];
      const auto rep_d = grad_check<double>(
          [&](Tape* t) { return ops::dot_constant(cd.op(cd.inputs, t), rd, t); }, cd.inputs, 1e-5);
      d.max_rel_error = std::max(d.max_rel_error, rep_d.max_rel_error);
      d.coordinates += rep_d.coordinates;

      auto& cf = fc[k];
      auto& ct = twin[k];
      const auto rep_f = grad_check_mixed<float, double>(
          [&](Tape* t) { return ops::dot_constant(cf.op(cf.inputs, t), rf, t); }, cf.inputs,
          [&](Tape* t) { return ops::dot_constant(ct.op(ct.inputs, t), rf_twin, t); }, ct.inputs, 1e-3);
      f.max_rel_error = std::max(f.max_rel_error, rep_f.max_rel_error);
      f.coordinates += rep_f.coordinates;
    }
    out.push_back(d);
    out.push_back(f);
  }

  if (options.end_to_end) {
    EndToEnd e = end_to_end_setup(options.seed);
    const Tensorf rgb_f = e.rgb.cast<float>(), depth_f = e.depth.cast<float>(), gt_f = e.gt.cast<float>();
    auto loss_d = [&](Tape* t) {
      auto o = forward_pdnet(e.pd, e.rgb, &e.depth, {true, t});
      return total_loss(o.saliency, o.side_outputs, e.gt, 0.5, t);
    };
    auto loss_f = [&](Tape* t) {
      auto o = forward_pdnet(e.pf, rgb_f, &depth_f, {true, t});
      return total_loss(o.saliency, o.side_outputs, gt_f, 0.5, t);
    };
    auto in_d = trainable_tensors(e.pd);
    auto in_f = trainable_tensors(e.pf);

    const auto rep_d = grad_check<double>(loss_d, in_d, 1e-5, kRetrySteps);
    out.push_back({"total_loss_end_to_end", "double", rep_d.max_rel_error, options.double_threshold,
                   rep_d.coordinates});
    const auto rep_f = grad_check_mixed<float, double>(loss_f, in_f, loss_d, in_d, 1e-3, kRetrySteps);
    out.push_back({"total_loss_end_to_end", "float", rep_f.max_rel_error, options.float_threshold,
                   rep_f.coordinates});
  }
  return out;
}

}  // namespace pdnet
