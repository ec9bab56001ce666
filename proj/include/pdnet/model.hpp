#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "pdnet/kv_config.hpp"
#include "pdnet/ops.hpp"
#include "pdnet/parameter.hpp"
#include "pdnet/rng.hpp"
#include "pdnet/tape.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

struct MasterConfig {
  std::size_t input_channels = 3;
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::vector<std::size_t> convs_per_block{2, 2, 3, 3};
  std::size_t input_size = 64;
  bool side_outputs = true;

  std::size_t blocks() const { return stage_channels.size(); }
  void validate() const;

  static MasterConfig vgg16_like() { return {}; }
  static MasterConfig vgg19_like() {
    MasterConfig c;
    c.convs_per_block = {2, 2, 4, 4};
    return c;
  }
};

struct SubNetConfig {
  std::size_t input_channels = 1;
  /// One entry per stage up to and including fusion_stage.
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t fusion_stage = 3;

  void validate() const;
};

enum class FusionMode { gate, add, concat };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

struct FusionSpec {
  FusionMode mode = FusionMode::gate;
  double alpha = 1.0;
  /// Derive alpha from the channel ratio at build time.
  bool alpha_auto = false;

  /// Requires alpha > 0. The forward pass itself also accepts alpha = 0.
  void validate() const;
};

double compute_alpha(std::size_t subnet_channels, std::size_t master_channels);

/// Subnet mirroring the master widths, fused at the deepest stage.
SubNetConfig default_subnet_for(const MasterConfig& master);

/// Checks `subnet` against `master` for the given fusion mode.
void check_compatible(const MasterConfig& master, const SubNetConfig& subnet, const FusionSpec& fusion);

KeyValues to_key_values(const MasterConfig& master, const std::optional<SubNetConfig>& subnet,
                        const FusionSpec& fusion);
void from_key_values(const KeyValues& kv, MasterConfig& master, std::optional<SubNetConfig>& subnet,
                     FusionSpec& fusion);

/// All tensors of one network plus the configuration that shaped them.
/// Names carry the group: "enc.", "dec.", "head.", "sub.".
template <typename Real>
class PDNetParams {
 public:
  MasterConfig master;
  std::optional<SubNetConfig> subnet;
  FusionSpec fusion;

  void add(Parameter<Real> param);
  ParameterList<Real>& list() { return params_; }
  const ParameterList<Real>& list() const { return params_; }

  Parameter<Real>* find(const std::string& name);
  const Parameter<Real>* find(const std::string& name) const;
  /// Throws ConfigError for unknown names.
  Parameter<Real>& get(const std::string& name);
  const Parameter<Real>& get(const std::string& name) const;

  bool has_subnet() const { return subnet.has_value(); }

  /// Scalar count over trainable tensors of a group.
  std::size_t count(ParamGroup group) const;
  std::size_t count_frozen() const;

 private:
  ParameterList<Real> params_;
  std::map<std::string, std::size_t> index_;
};

/// Master-only network.
template <typename Real>
PDNetParams<Real> build_master(const MasterConfig& config, Rng& rng);

/// Master plus depth subnet. The master and subnet draw from separate child
/// streams of `rng`, so the subnet init does not depend on the master shape.
template <typename Real>
PDNetParams<Real> build_pdnet(const MasterConfig& master, const SubNetConfig& subnet,
                              const FusionSpec& fusion, Rng& rng);

/// Subnet tensors alone, following `convs_per_block` of the master.
template <typename Real>
ParameterList<Real> build_subnet(const SubNetConfig& config, const std::vector<std::size_t>& convs_per_block,
                                 Rng& rng);

struct ForwardOptions {
  bool training = true;
  Tape* tape = nullptr;
};

template <typename Real>
struct ForwardResult {
  Tensor<Real> saliency;                   // [N,1,H,W] in (0,1)
  std::vector<Tensor<Real>> side_outputs;  // logits at input resolution, deepest first
};

/// Depth branch up to the fusion stage. Depth values must lie in [0,1].
template <typename Real>
Tensor<Real> forward_subnet(PDNetParams<Real>& params, const Tensor<Real>& depth, ForwardOptions options);

template <typename Real>
Tensor<Real> fuse_features(const Tensor<Real>& image_features, const Tensor<Real>& depth_features,
                           const FusionSpec& spec, Tape* tape = nullptr);

/// `depth` may be null for the master-only path. Batch-norm layers whose
/// parameters are frozen always run in eval mode.
template <typename Real>
ForwardResult<Real> forward_pdnet(PDNetParams<Real>& params, const Tensor<Real>& rgb,
                                  std::type_identity_t<const Tensor<Real>*> depth,
                                  const FusionSpec& spec, ForwardOptions options);

template <typename Real>
ForwardResult<Real> forward_pdnet(PDNetParams<Real>& params, const Tensor<Real>& rgb,
                                  std::type_identity_t<const Tensor<Real>*> depth,
                                  ForwardOptions options) {
  return forward_pdnet(params, rgb, depth, params.fusion, options);
}

template <typename Real>
Tensor<Real> bce_loss(const Tensor<Real>& saliency, const Tensor<Real>& target, Tape* tape = nullptr);

/// bce(S) + side_weight * mean_i bce(sigmoid(side_i)).
template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& saliency, const std::vector<Tensor<Real>>& side_outputs,
                        const Tensor<Real>& target, double side_weight, Tape* tape = nullptr);

/// Flags every master-encoder tensor frozen and drops its gradient buffer.
template <typename Real>
void freeze_prior(PDNetParams<Real>& params);

}  // namespace pdnet
