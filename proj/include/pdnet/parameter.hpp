#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pdnet/tensor.hpp"

namespace pdnet {

/// Which part of the network a tensor belongs to. The master encoder is the
/// pretrained prior; the subnet is the depth branch.
enum class ParamGroup { master_encoder, master_decoder, subnet };

std::string_view to_string(ParamGroup group);

template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  ParamGroup group = ParamGroup::master_decoder;
  bool frozen = false;
  /// False for state buffers (batch-norm running statistics) that are saved
  /// with the model but never receive gradients.
  bool trainable = true;
};

template <typename Real>
using ParameterList = std::vector<Parameter<Real>>;

}  // namespace pdnet
