#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "pdnet/data.hpp"
#include "pdnet/kv_config.hpp"
#include "pdnet/metrics.hpp"
#include "pdnet/model.hpp"
#include "pdnet/pnm.hpp"
#include "pdnet/trainer.hpp"

namespace pdnet::cli {

enum ExitCode : int { ok = 0, usage = 1, runtime = 2, verification = 3 };

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Every accepted configuration key with its default.
const std::vector<KeyDoc>& key_catalog();

/// Everything a subcommand may read, assembled from defaults and user keys.
struct RunConfig {
  std::size_t data_n = 600;
  std::uint64_t data_seed = 0;
  bool data_split = true;
  SceneConfig scene;
  MasterConfig master;
  SubNetConfig subnet;
  FusionSpec fusion;
  VariantKind variant = VariantKind::pdnet;
  TrainConfig pretrain = TrainConfig::with_epochs(15);
  TrainConfig train = TrainConfig::with_epochs(20);
  MetricOptions metrics;
  std::vector<std::uint64_t> ablate_seeds{0};
  std::vector<double> low_alphas{0.3, 0.5, 0.7, 0.9};
  std::vector<double> high_alphas{1.3, 1.5, 1.7, 1.9};
  bool alpha_groups = true;
  bool alpha_zero_row = false;
  std::size_t jobs = 1;
  std::uint64_t grad_check_seed = 0;
  std::size_t grad_check_op_seeds = 3;
};

/// Throws ConfigError naming the first key missing from the catalog.
RunConfig make_run_config(const KeyValues& kv);

/// S * 255 rounded half up, one byte per pixel.
pnm::Image saliency_to_pgm(const Tensorf& saliency);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pdnet::cli
