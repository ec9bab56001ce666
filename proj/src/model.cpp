#include "pdnet/model.hpp"

#include <cmath>

#include "pdnet/error.hpp"

namespace pdnet {
namespace {

constexpr double kInitStddev = 0.1;

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::string block_prefix(const char* group, std::size_t block) {
  return std::string(group) + ".b" + std::to_string(block);
}

template <typename Real>
class Builder {
 public:
  Builder(ParameterList<Real>& out, Rng& rng) : out_(out), rng_(rng) {}

  void weight(const std::string& name, Shape shape, ParamGroup group) {
    Tensor<Real> w = truncated_normal_init<Real>(shape, kInitStddev, rng_);
    w.set_requires_grad(true);
    out_.push_back({name, w, group, false, true});
  }

  void bias(const std::string& name, std::size_t channels, ParamGroup group) {
    out_.push_back({name, Tensor<Real>::zeros({channels, 1, 1, 1}, true), group, false, true});
  }

  void batch_norm(const std::string& name, std::size_t channels, ParamGroup group) {
    out_.push_back({name + ".gamma", Tensor<Real>::full({1, channels, 1, 1}, Real(1), true), group, false, true});
    out_.push_back({name + ".beta", Tensor<Real>::zeros({1, channels, 1, 1}, true), group, false, true});
    out_.push_back({name + ".mean", Tensor<Real>::zeros({1, channels, 1, 1}), group, false, false});
    out_.push_back({name + ".var", Tensor<Real>::full({1, channels, 1, 1}, Real(1)), group, false, false});
  }

  /// conv3x3 (no bias) -> BN per conv; returns the output width.
  std::size_t encoder_block(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                            std::size_t convs, ParamGroup group) {
    for (std::size_t j = 0; j < convs; ++j) {
      const std::string name = prefix + ".c" + std::to_string(j);
      weight(name + ".w", {out_channels, j == 0 ? in_channels : out_channels, 3, 3}, group);
      batch_norm(name + ".bn", out_channels, group);
    }
    return out_channels;
  }

 private:
  ParameterList<Real>& out_;
  Rng& rng_;
};

template <typename Real>
void build_master_into(PDNetParams<Real>& p, const std::optional<SubNetConfig>& subnet, const FusionSpec& fusion,
                       Rng& rng) {
  const MasterConfig& cfg = p.master;
  ParameterList<Real> list;
  Builder<Real> b(list, rng);

  const bool concat_fusion = subnet.has_value() && fusion.mode == FusionMode::concat;
  std::size_t in_ch = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    in_ch = b.encoder_block(block_prefix("enc", i), in_ch, cfg.stage_channels[i], cfg.convs_per_block[i],
                            ParamGroup::master_encoder);
    if (concat_fusion && i == subnet->fusion_stage) in_ch += subnet->stage_channels[i];
  }
  for (std::size_t k = cfg.blocks(); k-- > 0;) {
    const std::string pre = block_prefix("dec", k);
    const std::size_t ch = cfg.stage_channels[k];
    b.weight(pre + ".up.w", {in_ch, ch, 2, 2}, ParamGroup::master_decoder);
    b.bias(pre + ".up.b", ch, ParamGroup::master_decoder);
    b.weight(pre + ".conv.w", {ch, 2 * ch, 3, 3}, ParamGroup::master_decoder);
    b.batch_norm(pre + ".conv.bn", ch, ParamGroup::master_decoder);
    if (cfg.side_outputs) {
      b.weight(pre + ".side.w", {1, ch, 3, 3}, ParamGroup::master_decoder);
      b.bias(pre + ".side.b", 1, ParamGroup::master_decoder);
    }
    in_ch = ch;
  }
  const std::size_t head_in = cfg.side_outputs ? cfg.blocks() : cfg.stage_channels[0];
  b.weight("head.w", {1, head_in, 3, 3}, ParamGroup::master_decoder);
  b.bias("head.b", 1, ParamGroup::master_decoder);
  for (auto& param : list) p.add(std::move(param));
}

template <typename Real>
Tensor<Real> conv_bn_relu(PDNetParams<Real>& p, const std::string& name, const Tensor<Real>& x,
                          ForwardOptions options) {
  const auto& gamma = p.get(name + ".bn.gamma");
  ops::BatchNormStats<Real> stats{p.get(name + ".bn.mean").value, p.get(name + ".bn.var").value};
  ops::BatchNormOptions bn_options;
  bn_options.training = options.training && !gamma.frozen;
  Tensor<Real> y = ops::conv2d(x, p.get(name + ".w").value, Tensor<Real>(), {1, 1}, options.tape);
  y = ops::batch_norm(y, gamma.value, p.get(name + ".bn.beta").value, stats, bn_options, options.tape);
  return ops::relu(y, options.tape);
}

template <typename Real>
Tensor<Real> encoder_block(PDNetParams<Real>& p, const std::string& prefix, Tensor<Real> x, std::size_t convs,
                           ForwardOptions options) {
  for (std::size_t j = 0; j < convs; ++j) x = conv_bn_relu(p, prefix + ".c" + std::to_string(j), x, options);
  return x;
}

template <typename Real>
void check_unit_interval(const Tensor<Real>& t, const char* what) {
  for (Real v : t.data()) {
    if (!(v >= Real(0) && v <= Real(1))) {
      throw DataError(std::string(what) + " values must lie in [0,1] (found " + std::to_string(double(v)) + ")");
    }
  }
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::gate:
      return "gate";
    case FusionMode::add:
      return "add";
    case FusionMode::concat:
      return "concat";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "gate") return FusionMode::gate;
  if (text == "add") return FusionMode::add;
  if (text == "concat") return FusionMode::concat;
  throw ConfigError("unknown fusion mode '" + std::string(text) + "' (expected gate, add or concat)");
}

void MasterConfig::validate() const {
  if (input_channels == 0) throw ConfigError("master.input_channels must be positive");
  if (stage_channels.empty()) throw ConfigError("master.stage_channels must list at least one block");
  if (convs_per_block.size() != stage_channels.size()) {
    throw ConfigError("master.convs_per_block has " + std::to_string(convs_per_block.size()) +
                      " entries but master.stage_channels has " + std::to_string(stage_channels.size()));
  }
  for (std::size_t i = 0; i < blocks(); ++i) {
    if (stage_channels[i] == 0) throw ConfigError("master.stage_channels entries must be positive");
    if (convs_per_block[i] == 0) throw ConfigError("master.convs_per_block entries must be positive");
  }
  if (!is_power_of_two(input_size)) {
    throw ConfigError("master.input_size must be a power of two (got " + std::to_string(input_size) + ")");
  }
  if (blocks() >= 32 || input_size < (std::size_t{1} << blocks())) {
    throw ConfigError("master.input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(blocks()) + " (one halving per block)");
  }
}

void SubNetConfig::validate() const {
  if (input_channels == 0) throw ConfigError("subnet.input_channels must be positive");
  if (stage_channels.size() != fusion_stage + 1) {
    throw ConfigError("subnet.stage_channels must have fusion_stage+1 = " + std::to_string(fusion_stage + 1) +
                      " entries (got " + std::to_string(stage_channels.size()) + ")");
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("subnet.stage_channels entries must be positive");
  }
}

void FusionSpec::validate() const {
  if (!std::isfinite(alpha) || alpha <= 0.0) {
    throw ConfigError("fusion.alpha must be a positive number (got " + format_double(alpha) + ")");
  }
}

double compute_alpha(std::size_t subnet_channels, std::size_t master_channels) {
  if (subnet_channels == 0 || master_channels == 0) {
    throw ConfigError("compute_alpha: channel counts must be positive");
  }
  return static_cast<double>(subnet_channels) / static_cast<double>(master_channels);
}

void check_compatible(const MasterConfig& master, const SubNetConfig& subnet, const FusionSpec& fusion) {
  master.validate();
  subnet.validate();
  if (subnet.fusion_stage >= master.blocks()) {
    throw ConfigError("subnet.fusion_stage " + std::to_string(subnet.fusion_stage) + " exceeds the " +
                      std::to_string(master.blocks()) + " master blocks");
  }
  const std::size_t s = subnet.fusion_stage;
  if (fusion.mode != FusionMode::concat && subnet.stage_channels[s] != master.stage_channels[s]) {
    throw ConfigError("fusion mode " + std::string(to_string(fusion.mode)) + " needs " +
                      std::to_string(master.stage_channels[s]) + " subnet channels at stage " + std::to_string(s) +
                      " (got " + std::to_string(subnet.stage_channels[s]) + ")");
  }
}

SubNetConfig default_subnet_for(const MasterConfig& master) {
  SubNetConfig s;
  s.stage_channels = master.stage_channels;
  s.fusion_stage = master.blocks() - 1;
  return s;
}

KeyValues to_key_values(const MasterConfig& master, const std::optional<SubNetConfig>& subnet,
                        const FusionSpec& fusion) {
  KeyValues kv;
  kv.set("master.input_channels", std::to_string(master.input_channels));
  kv.set("master.stage_channels", format_list(master.stage_channels));
  kv.set("master.convs_per_block", format_list(master.convs_per_block));
  kv.set("master.input_size", std::to_string(master.input_size));
  kv.set("master.side_outputs", master.side_outputs ? "1" : "0");
  kv.set("subnet.enabled", subnet ? "1" : "0");
  if (subnet) {
    kv.set("subnet.input_channels", std::to_string(subnet->input_channels));
    kv.set("subnet.stage_channels", format_list(subnet->stage_channels));
    kv.set("subnet.fusion_stage", std::to_string(subnet->fusion_stage));
  }
  kv.set("fusion.mode", std::string(to_string(fusion.mode)));
  kv.set("fusion.alpha", fusion.alpha_auto ? "auto" : format_double(fusion.alpha));
  return kv;
}

void from_key_values(const KeyValues& kv, MasterConfig& master, std::optional<SubNetConfig>& subnet,
                     FusionSpec& fusion) {
  SubNetConfig sub = subnet.value_or(default_subnet_for(master));
  bool enabled = subnet.has_value();
  bool sub_channels_given = false;
  bool sub_stage_given = false;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "master.input_channels") {
      master.input_channels = parse_size(key, value);
    } else if (key == "master.stage_channels") {
      master.stage_channels = parse_size_list(key, value);
    } else if (key == "master.convs_per_block") {
      master.convs_per_block = parse_size_list(key, value);
    } else if (key == "master.input_size") {
      master.input_size = parse_size(key, value);
    } else if (key == "master.side_outputs") {
      master.side_outputs = parse_bool(key, value);
    } else if (key == "subnet.enabled") {
      enabled = parse_bool(key, value);
    } else if (key == "subnet.input_channels") {
      sub.input_channels = parse_size(key, value);
    } else if (key == "subnet.stage_channels") {
      sub.stage_channels = parse_size_list(key, value);
      sub_channels_given = true;
    } else if (key == "subnet.fusion_stage") {
      sub.fusion_stage = parse_size(key, value);
      sub_stage_given = true;
    } else if (key == "fusion.mode") {
      fusion.mode = parse_fusion_mode(value);
    } else if (key == "fusion.alpha") {
      if (value == "auto") {
        fusion.alpha_auto = true;
      } else {
        fusion.alpha = parse_double(key, value);
        fusion.alpha_auto = false;
      }
    } else if (key.starts_with("master.") || key.starts_with("subnet.") || key.starts_with("fusion.")) {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  // Unspecified subnet shape follows the master up to the fusion stage.
  if (!sub_stage_given && !sub_channels_given) {
    sub.fusion_stage = master.blocks() - 1;
  } else if (!sub_stage_given) {
    sub.fusion_stage = sub.stage_channels.empty() ? 0 : sub.stage_channels.size() - 1;
  }
  if (!sub_channels_given && sub.fusion_stage < master.blocks()) {
    sub.stage_channels.assign(master.stage_channels.begin(),
                              master.stage_channels.begin() + static_cast<std::ptrdiff_t>(sub.fusion_stage + 1));
  }
  subnet = enabled ? std::optional<SubNetConfig>(sub) : std::nullopt;
}

template <typename Real>
void PDNetParams<Real>::add(Parameter<Real> param) {
  if (index_.count(param.name)) throw ConfigError("duplicate parameter name '" + param.name + "'");
  index_[param.name] = params_.size();
  params_.push_back(std::move(param));
}

template <typename Real>
Parameter<Real>* PDNetParams<Real>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Real>
const Parameter<Real>* PDNetParams<Real>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Real>
Parameter<Real>& PDNetParams<Real>::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename Real>
const Parameter<Real>& PDNetParams<Real>::get(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename Real>
std::size_t PDNetParams<Real>::count(ParamGroup group) const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    if (p.trainable && p.group == group) total += p.value.numel();
  }
  return total;
}

template <typename Real>
std::size_t PDNetParams<Real>::count_frozen() const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    if (p.trainable && p.frozen) total += p.value.numel();
  }
  return total;
}

template <typename Real>
PDNetParams<Real> build_master(const MasterConfig& config, Rng& rng) {
  config.validate();
  PDNetParams<Real> p;
  p.master = config;
  Rng master_rng = rng.split(1);
  build_master_into(p, std::nullopt, p.fusion, master_rng);
  return p;
}

template <typename Real>
ParameterList<Real> build_subnet(const SubNetConfig& config, const std::vector<std::size_t>& convs_per_block,
                                 Rng& rng) {
  config.validate();
  if (convs_per_block.size() < config.stage_channels.size()) {
    throw ConfigError("subnet needs a conv count for each of its " + std::to_string(config.stage_channels.size()) +
                      " stages");
  }
  ParameterList<Real> list;
  Builder<Real> b(list, rng);
  std::size_t in_ch = config.input_channels;
  for (std::size_t i = 0; i < config.stage_channels.size(); ++i) {
    in_ch = b.encoder_block(block_prefix("sub", i), in_ch, config.stage_channels[i], convs_per_block[i],
                            ParamGroup::subnet);
  }
  return list;
}

template <typename Real>
PDNetParams<Real> build_pdnet(const MasterConfig& master, const SubNetConfig& subnet, const FusionSpec& fusion,
                              Rng& rng) {
  check_compatible(master, subnet, fusion);
  PDNetParams<Real> p;
  p.master = master;
  p.subnet = subnet;
  p.fusion = fusion;
  if (fusion.alpha_auto) {
    p.fusion.alpha = compute_alpha(subnet.stage_channels[subnet.fusion_stage], master.stage_channels[subnet.fusion_stage]);
  }
  p.fusion.validate();
  Rng master_rng = rng.split(1);
  build_master_into(p, p.subnet, p.fusion, master_rng);
  Rng subnet_rng = rng.split(2);
  for (auto& param : build_subnet<Real>(subnet, master.convs_per_block, subnet_rng)) p.add(std::move(param));
  return p;
}

template <typename Real>
Tensor<Real> forward_subnet(PDNetParams<Real>& params, const Tensor<Real>& depth, ForwardOptions options) {
  if (!params.subnet) throw ConfigError("forward_subnet: model has no depth subnet");
  const SubNetConfig& cfg = *params.subnet;
  if (depth.shape().c != cfg.input_channels) {
    throw ShapeError("forward_subnet: depth has " + std::to_string(depth.shape().c) + " channels, expected " +
                     std::to_string(cfg.input_channels));
  }
  check_unit_interval(depth, "depth");
  Tensor<Real> x = depth;
  for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    x = encoder_block(params, block_prefix("sub", i), x, params.master.convs_per_block[i], options);
    x = ops::max_pool2d(x, options.tape);
  }
  return x;
}

template <typename Real>
Tensor<Real> fuse_features(const Tensor<Real>& image_features, const Tensor<Real>& depth_features,
                           const FusionSpec& spec, Tape* tape) {
  if (!std::isfinite(spec.alpha) || spec.alpha < 0.0) {
    throw ConfigError("fuse_features: alpha must be finite and non-negative");
  }
  const Shape& a = image_features.shape();
  const Shape& d = depth_features.shape();
  switch (spec.mode) {
    case FusionMode::gate:
    case FusionMode::add:
      if (!(a == d)) {
        throw ShapeError("fuse_features: " + std::string(to_string(spec.mode)) + " needs equal shapes, got " +
                         a.str() + " and " + d.str());
      }
      return ops::scale_combine(image_features, depth_features, spec.alpha,
                                spec.mode == FusionMode::gate ? ops::CombineMode::gate : ops::CombineMode::add, tape);
    case FusionMode::concat: {
      if (a.n != d.n || a.h != d.h || a.w != d.w) {
        throw ShapeError("fuse_features: concat needs matching N,H,W, got " + a.str() + " and " + d.str());
      }
      Tensor<Real> scaled = ops::scale_combine(Tensor<Real>::zeros(d), depth_features, spec.alpha,
                                               ops::CombineMode::add, tape);
      const Tensor<Real> parts[] = {image_features, scaled};
      return ops::concat_channels<Real>(parts, tape);
    }
  }
  throw ConfigError("fuse_features: unknown mode");
}

template <typename Real>
ForwardResult<Real> forward_pdnet(PDNetParams<Real>& params, const Tensor<Real>& rgb,
                                  std::type_identity_t<const Tensor<Real>*> depth,
                                  const FusionSpec& spec, ForwardOptions options) {
  const MasterConfig& cfg = params.master;
  const Shape& rs = rgb.shape();
  if (rs.c != cfg.input_channels) {
    throw ShapeError("forward_pdnet: image has " + std::to_string(rs.c) + " channels, expected " +
                     std::to_string(cfg.input_channels));
  }
  const std::size_t stride = std::size_t{1} << cfg.blocks();
  if (rs.h % stride != 0 || rs.w % stride != 0 || rs.h == 0 || rs.w == 0) {
    throw ShapeError("forward_pdnet: input " + std::to_string(rs.h) + "x" + std::to_string(rs.w) +
                     " is not divisible by " + std::to_string(stride));
  }
  if (depth != nullptr) {
    if (!params.subnet) throw ConfigError("forward_pdnet: depth given but the model has no subnet");
    const Shape& ds = depth->shape();
    if (ds.n != rs.n || ds.h != rs.h || ds.w != rs.w) {
      throw ShapeError("forward_pdnet: depth " + ds.str() + " does not match image " + rs.str());
    }
  } else if (params.subnet && spec.mode == FusionMode::concat) {
    throw ConfigError("forward_pdnet: concat fusion needs a depth input");
  }

  std::vector<Tensor<Real>> skips;
  Tensor<Real> x = rgb;
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    x = encoder_block(params, block_prefix("enc", i), x, cfg.convs_per_block[i], options);
    skips.push_back(x);
    x = ops::max_pool2d(x, options.tape);
    if (depth != nullptr && i == params.subnet->fusion_stage) {
      const Tensor<Real> d_o = forward_subnet(params, *depth, options);
      x = fuse_features(x, d_o, spec, options.tape);
    }
  }

  ForwardResult<Real> result;
  for (std::size_t k = cfg.blocks(); k-- > 0;) {
    const std::string pre = block_prefix("dec", k);
    Tensor<Real> up = ops::transposed_conv2d(x, params.get(pre + ".up.w").value, params.get(pre + ".up.b").value,
                                             {2, 0}, options.tape);
    Tensor<Real> skip = ops::center_crop(skips[k], up.shape().h, up.shape().w, options.tape);
    const Tensor<Real> parts[] = {up, skip};
    x = ops::concat_channels<Real>(parts, options.tape);
    x = conv_bn_relu(params, pre + ".conv", x, options);
    if (cfg.side_outputs) {
      Tensor<Real> side = ops::conv2d(x, params.get(pre + ".side.w").value, params.get(pre + ".side.b").value,
                                      {1, 1}, options.tape);
      if (k > 0) side = ops::upsample_nearest(side, std::size_t{1} << k, options.tape);
      result.side_outputs.push_back(side);
    }
  }
  const Tensor<Real> head_in =
      cfg.side_outputs ? ops::concat_channels<Real>(result.side_outputs, options.tape) : x;
  Tensor<Real> logits = ops::conv2d(head_in, params.get("head.w").value, params.get("head.b").value, {1, 1},
                                    options.tape);
  result.saliency = ops::sigmoid(logits, options.tape);
  return result;
}

template <typename Real>
Tensor<Real> bce_loss(const Tensor<Real>& saliency, const Tensor<Real>& target, Tape* tape) {
  return ops::binary_cross_entropy(saliency, target, 1e-7, tape);
}

template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& saliency, const std::vector<Tensor<Real>>& side_outputs,
                        const Tensor<Real>& target, double side_weight, Tape* tape) {
  if (!std::isfinite(side_weight) || side_weight < 0.0) {
    throw ConfigError("total_loss: side_weight must be finite and non-negative");
  }
  Tensor<Real> main = bce_loss(saliency, target, tape);
  if (side_weight == 0.0 || side_outputs.empty()) return main;
  std::vector<Tensor<Real>> terms{main};
  std::vector<double> weights{1.0};
  for (const auto& side : side_outputs) {
    terms.push_back(bce_loss(ops::sigmoid(side, tape), target, tape));
    weights.push_back(side_weight / static_cast<double>(side_outputs.size()));
  }
  return ops::weighted_sum<Real>(terms, weights, tape);
}

template <typename Real>
void freeze_prior(PDNetParams<Real>& params) {
  for (auto& p : params.list()) {
    if (p.group != ParamGroup::master_encoder) continue;
    p.frozen = true;
    if (p.value.requires_grad()) p.value.set_requires_grad(false);
  }
}

#define PDNET_INSTANTIATE_MODEL(Real)                                                                            \
  template class PDNetParams<Real>;                                                                              \
  template PDNetParams<Real> build_master(const MasterConfig&, Rng&);                                            \
  template PDNetParams<Real> build_pdnet(const MasterConfig&, const SubNetConfig&, const FusionSpec&, Rng&);      \
  template ParameterList<Real> build_subnet(const SubNetConfig&, const std::vector<std::size_t>&, Rng&);          \
  template Tensor<Real> forward_subnet(PDNetParams<Real>&, const Tensor<Real>&, ForwardOptions);                 \
  template Tensor<Real> fuse_features(const Tensor<Real>&, const Tensor<Real>&, const FusionSpec&, Tape*);        \
  template ForwardResult<Real> forward_pdnet(PDNetParams<Real>&, const Tensor<Real>&, const Tensor<Real>*,        \
                                             const FusionSpec&, ForwardOptions);                                 \
  template Tensor<Real> bce_loss(const Tensor<Real>&, const Tensor<Real>&, Tape*);                               \
  template Tensor<Real> total_loss(const Tensor<Real>&, const std::vector<Tensor<Real>>&, const Tensor<Real>&,   \
                                   double, Tape*);                                                               \
  template void freeze_prior(PDNetParams<Real>&);

PDNET_INSTANTIATE_MODEL(float)
PDNET_INSTANTIATE_MODEL(double)

#undef PDNET_INSTANTIATE_MODEL

}  // namespace pdnet
