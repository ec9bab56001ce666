#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pdnet/data.hpp"
#include "pdnet/kv_config.hpp"
#include "pdnet/metrics.hpp"
#include "pdnet/model.hpp"

namespace pdnet {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  std::uint64_t seed = 0;
  double side_weight = 0.5;
  bool shuffle = true;
  /// Test-split evaluation every this many epochs; the last epoch is always
  /// evaluated. 0 evaluates only the last epoch.
  std::size_t eval_every = 1;
  MetricOptions metrics;

  static TrainConfig with_epochs(std::size_t n) {
    TrainConfig c;
    c.epochs = n;
    return c;
  }

  void validate() const;
  /// Linear decay from lr_start at epoch 0 to lr_end at the last epoch.
  double learning_rate(std::size_t epoch) const;
};

/// Reads `<prefix>epochs`, `<prefix>batch_size`, ... ; unknown keys under the
/// prefix are errors.
void apply_train_keys(const KeyValues& kv, const std::string& prefix, TrainConfig& config);
void write_train_keys(const TrainConfig& config, const std::string& prefix, KeyValues& kv);

enum class VariantKind { mnet, pnet, dnet, pdnet };

std::string_view to_string(VariantKind kind);
VariantKind parse_variant(std::string_view text);

struct AblationVariant {
  VariantKind kind = VariantKind::pdnet;
  /// Fusion weight for the subnet variants; 0 runs the alpha-off path.
  double alpha = 1.0;

  bool use_prior() const { return kind == VariantKind::pnet || kind == VariantKind::pdnet; }
  bool use_depth_branch() const { return kind == VariantKind::dnet || kind == VariantKind::pdnet; }
  /// 4 for MNet (rgb and depth stacked), 3 otherwise.
  std::size_t input_channels() const { return kind == VariantKind::mnet ? 4 : 3; }
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_mae;
  std::optional<double> test_fbeta;
};

struct TrainResult {
  PDNetParams<float> params;
  std::vector<EpochLog> log;
  std::uint64_t steps = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains the master network alone on rgb and gt. `master.input_channels`
/// must be 3.
TrainResult pretrain_master(const TrainConfig& config, const MasterConfig& master, std::span<const Sample> train,
                            std::span<const Sample> test = {}, const ProgressFn& progress = {});

/// Builds the network for `variant`, copies and freezes the prior encoder
/// when the variant uses one, then trains every unfrozen tensor.
TrainResult train_pdnet(const TrainConfig& config, const MasterConfig& master, const SubNetConfig& subnet,
                        const FusionSpec& fusion, const AblationVariant& variant, const PDNetParams<float>* prior,
                        std::span<const Sample> train, std::span<const Sample> test = {},
                        const ProgressFn& progress = {});

/// Eval-mode saliency maps, one [1,1,H,W] tensor per sample. The input
/// layout (rgb, rgb+depth stacked, rgb with depth branch) follows `params`.
std::vector<Tensorf> predict(PDNetParams<float>& params, std::span<const Sample> samples,
                             std::size_t batch_size = 16);

MetricsReport evaluate_model(PDNetParams<float>& params, std::span<const Sample> samples,
                             const MetricOptions& options = {});

/// `epoch,lr,train_loss,test_mae,test_fbeta`; test cells are empty on
/// epochs without evaluation.
void write_log_csv(std::span<const EpochLog> log, std::ostream& out);

struct AblationConfig {
  TrainConfig pretrain = TrainConfig::with_epochs(15);
  TrainConfig train = TrainConfig::with_epochs(20);
  MasterConfig master;
  SubNetConfig subnet;
  FusionMode fusion_mode = FusionMode::gate;
  std::vector<double> low_alphas{0.3, 0.5, 0.7, 0.9};
  std::vector<double> high_alphas{1.3, 1.5, 1.7, 1.9};
  std::vector<std::uint64_t> seeds{0};
  /// Skip the two averaged alpha groups (trend runs only need four rows).
  bool alpha_groups = true;
  /// Extra PDNet row with alpha = 0, expected to match PNet exactly.
  bool alpha_zero_row = false;
  /// When set, every trained network is saved here.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Independent runs of one seed executed concurrently.
  std::size_t jobs = 1;
};

struct AblationRow {
  std::string variant;
  std::string alpha;  // "-" when the variant has no depth branch
  double fbeta = 0.0;
  double mae = 0.0;
  std::string seed;  // a seed, or "mean" across seeds
};

/// Per seed: pretrain the prior, then MNet, PNet, DNet(1), PDNet(1) and the
/// two averaged alpha groups. With several seeds, per-seed rows are followed
/// by mean rows. The prior is pretrained on `pretrain_set`, or on `train`
/// when it is empty.
std::vector<AblationRow> run_ablation(const AblationConfig& config, std::span<const Sample> train,
                                      std::span<const Sample> test, const ProgressFn& progress = {},
                                      std::span<const Sample> pretrain_set = {});

/// `variant,alpha,fbeta,mae,seed`.
void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out);

}  // namespace pdnet
