#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdnet/model.hpp"

namespace pdnet {

struct GradSuiteEntry {
  std::string name;
  std::string precision;  // "double" or "float"
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t coordinates = 0;

  bool passed() const { return max_rel_error < threshold; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  /// Random inputs per op.
  std::size_t op_seeds = 3;
  bool end_to_end = true;
  double double_threshold = 1e-5;
  double float_threshold = 1e-3;
};

/// Smallest end-to-end network: 2 blocks of widths {4, 8}, 16x16 input,
/// depth branch fused after the second block.
MasterConfig grad_check_master();
SubNetConfig grad_check_subnet();

/// Every differentiable op in double (plain central differences) and float
/// (against a double twin), then total_loss through the whole network.
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options = {});

}  // namespace pdnet
