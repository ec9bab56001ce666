#include "pdnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "pdnet/adam.hpp"
#include "pdnet/checkpoint.hpp"
#include "pdnet/error.hpp"
#include "pdnet/tape.hpp"

namespace pdnet {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5f0f;

Tensorf master_input(const PDNetParams<float>& params, const Batch& batch) {
  return params.master.input_channels == 4 ? rgbd_input(batch) : batch.rgb;
}

ForwardResult<float> run_forward(PDNetParams<float>& params, const Batch& batch, ForwardOptions options) {
  const Tensorf x = master_input(params, batch);
  return forward_pdnet(params, x, params.has_subnet() ? &batch.depth : nullptr, options);
}

void check_samples(const PDNetParams<float>& params, std::span<const Sample> samples, const char* what) {
  for (const Sample& s : samples) {
    const Shape& sh = s.rgb.shape();
    if (sh.h != params.master.input_size || sh.w != params.master.input_size) {
      throw ShapeError(std::string(what) + " sample '" + s.id + "' is " + std::to_string(sh.h) + "x" +
                       std::to_string(sh.w) + ", the network expects " + std::to_string(params.master.input_size) +
                       "x" + std::to_string(params.master.input_size) + " (preprocess first)");
    }
  }
}

TrainResult fit(PDNetParams<float> params, const TrainConfig& config, std::span<const Sample> train,
                std::span<const Sample> test, const ProgressFn& progress, const std::string& label) {
  config.validate();
  if (train.empty()) throw DataError(label + ": empty training set");
  check_samples(params, train, "training");
  check_samples(params, test, "test");

  TrainResult result;
  AdamState<float> state;
  const Rng shuffle_root = Rng(config.seed).split(kShuffleStream);
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) {
      Rng rng = shuffle_root.split(epoch);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Batch batch = make_batch(train, idx);
      zero_grads<float>(params.list());
      Tape tape;
      const auto out = run_forward(params, batch, {true, &tape});
      const Tensorf loss = total_loss(out.saliency, out.side_outputs, batch.gt, config.side_weight, &tape);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw AutodiffError(label + ": non-finite training loss at epoch " + std::to_string(epoch));
      }
      backward(loss, tape);
      try {
        adam_step<float>(params.list(), state, lr);
      } catch (const AutodiffError& e) {
        throw AutodiffError(label + ": epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    const bool last = epoch + 1 == config.epochs;
    const bool scheduled = config.eval_every != 0 && (epoch + 1) % config.eval_every == 0;
    if (!test.empty() && (last || scheduled)) {
      const MetricsReport report = evaluate_model(params, test, config.metrics);
      entry.test_mae = report.mae;
      entry.test_fbeta = report.f_beta;
    }
    result.log.push_back(entry);
    if (progress) {
      std::string line = label + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
                         " lr " + format_double(lr) + " loss " + format_double(entry.train_loss);
      if (entry.test_fbeta) {
        line += " test_mae " + format_double(*entry.test_mae) + " test_fbeta " + format_double(*entry.test_fbeta);
      }
      progress(line);
    }
  }
  result.steps = state.step;
  result.params = std::move(params);
  return result;
}

std::string alpha_label(const std::vector<double>& alphas) {
  std::string out;
  for (std::size_t i = 0; i < alphas.size(); ++i) out += (i ? ";" : "") + format_double(alphas[i]);
  return out;
}

struct RunSpec {
  std::string variant;
  std::string alpha;
  std::vector<AblationVariant> members;  // averaged into one row
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr_start > 0.0) || !(lr_end > 0.0) || !std::isfinite(lr_start) || !std::isfinite(lr_end)) {
    throw ConfigError("lr_start and lr_end must be positive");
  }
  if (lr_end > lr_start) throw ConfigError("lr_end must not exceed lr_start");
  if (!std::isfinite(side_weight) || side_weight < 0.0) throw ConfigError("side_weight must be >= 0");
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  if (epochs <= 1) return lr_start;
  if (epoch + 1 >= epochs) return lr_end;
  return lr_start + (lr_end - lr_start) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

void apply_train_keys(const KeyValues& kv, const std::string& prefix, TrainConfig& c) {
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with(prefix)) continue;
    const std::string field = key.substr(prefix.size());
    if (field == "epochs") {
      c.epochs = parse_size(key, value);
    } else if (field == "batch_size") {
      c.batch_size = parse_size(key, value);
    } else if (field == "lr_start") {
      c.lr_start = parse_double(key, value);
    } else if (field == "lr_end") {
      c.lr_end = parse_double(key, value);
    } else if (field == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_size(key, value));
    } else if (field == "side_weight") {
      c.side_weight = parse_double(key, value);
    } else if (field == "shuffle") {
      c.shuffle = parse_bool(key, value);
    } else if (field == "eval_every") {
      c.eval_every = parse_size(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
}

void write_train_keys(const TrainConfig& c, const std::string& prefix, KeyValues& kv) {
  kv.set(prefix + "epochs", std::to_string(c.epochs));
  kv.set(prefix + "batch_size", std::to_string(c.batch_size));
  kv.set(prefix + "lr_start", format_double(c.lr_start));
  kv.set(prefix + "lr_end", format_double(c.lr_end));
  kv.set(prefix + "seed", std::to_string(c.seed));
  kv.set(prefix + "side_weight", format_double(c.side_weight));
  kv.set(prefix + "shuffle", c.shuffle ? "true" : "false");
  kv.set(prefix + "eval_every", std::to_string(c.eval_every));
}

std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::mnet:
      return "MNet";
    case VariantKind::pnet:
      return "PNet";
    case VariantKind::dnet:
      return "DNet";
    case VariantKind::pdnet:
      return "PDNet";
  }
  return "unknown";
}

VariantKind parse_variant(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "mnet") return VariantKind::mnet;
  if (lower == "pnet") return VariantKind::pnet;
  if (lower == "dnet") return VariantKind::dnet;
  if (lower == "pdnet") return VariantKind::pdnet;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected MNet, PNet, DNet or PDNet)");
}

TrainResult pretrain_master(const TrainConfig& config, const MasterConfig& master, std::span<const Sample> train,
                            std::span<const Sample> test, const ProgressFn& progress) {
  if (master.input_channels != 3) throw ConfigError("pretraining needs a 3-channel master (master.input_channels)");
  config.validate();
  Rng rng(config.seed);
  return fit(build_master<float>(master, rng), config, train, test, progress, "pretrain");
}

TrainResult train_pdnet(const TrainConfig& config, const MasterConfig& master, const SubNetConfig& subnet,
                        const FusionSpec& fusion, const AblationVariant& variant, const PDNetParams<float>* prior,
                        std::span<const Sample> train, std::span<const Sample> test, const ProgressFn& progress) {
  const std::string name(to_string(variant.kind));
  if (variant.use_prior() && prior == nullptr) throw ConfigError(name + " needs a prior checkpoint");
  if (!variant.use_prior() && prior != nullptr) {
    throw ConfigError(name + " trains from a fresh initialisation; no prior checkpoint may be given");
  }
  if (!std::isfinite(variant.alpha) || variant.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  config.validate();

  MasterConfig m = master;
  m.input_channels = variant.input_channels();
  Rng rng(config.seed);
  PDNetParams<float> params;
  std::string label = name;
  if (variant.use_depth_branch()) {
    FusionSpec spec = fusion;
    const bool alpha_off = variant.alpha == 0.0 && !fusion.alpha_auto;
    spec.alpha = alpha_off ? 1.0 : variant.alpha;
    params = build_pdnet<float>(m, subnet, spec, rng);
    if (alpha_off) params.fusion.alpha = 0.0;
    label += "(alpha=" + format_double(params.fusion.alpha) + ")";
  } else {
    params = build_master<float>(m, rng);
  }
  if (prior != nullptr) {
    transfer_prior(*prior, params);
    freeze_prior(params);
  }
  return fit(std::move(params), config, train, test, progress, label);
}

std::vector<Tensorf> predict(PDNetParams<float>& params, std::span<const Sample> samples, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("predict: batch size must be >= 1");
  std::vector<Tensorf> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(samples, idx);
    const Tensorf s = run_forward(params, batch, {false, nullptr}).saliency;
    const std::size_t plane = s.shape().plane();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::vector<float> data(s.data().begin() + k * plane, s.data().begin() + (k + 1) * plane);
      out.push_back(Tensorf::from_data({1, 1, s.shape().h, s.shape().w}, std::move(data)));
    }
  }
  return out;
}

MetricsReport evaluate_model(PDNetParams<float>& params, std::span<const Sample> samples,
                             const MetricOptions& options) {
  if (samples.empty()) throw DataError("evaluate: empty sample list");
  const std::vector<Tensorf> predictions = predict(params, samples);
  std::vector<Tensorf> masks;
  masks.reserve(samples.size());
  for (const Sample& s : samples) masks.push_back(s.gt);
  return evaluate_predictions(predictions, masks, options);
}

void write_log_csv(std::span<const EpochLog> log, std::ostream& out) {
  out << "epoch,lr,train_loss,test_mae,test_fbeta\n";
  for (const EpochLog& e : log) {
    out << e.epoch << "," << format_double(e.lr) << "," << format_double(e.train_loss) << ",";
    if (e.test_mae) out << format_double(*e.test_mae);
    out << ",";
    if (e.test_fbeta) out << format_double(*e.test_fbeta);
    out << "\n";
  }
}

std::vector<AblationRow> run_ablation(const AblationConfig& config, std::span<const Sample> train,
                                      std::span<const Sample> test, const ProgressFn& progress,
                                      std::span<const Sample> pretrain_set) {
  if (config.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (test.empty()) throw DataError("ablation needs a non-empty test split");
  if (config.jobs == 0) throw ConfigError("jobs must be >= 1");
  config.pretrain.validate();
  config.train.validate();

  std::vector<RunSpec> specs{
      {"MNet", "-", {{VariantKind::mnet, 1.0}}},
      {"PNet", "-", {{VariantKind::pnet, 1.0}}},
      {"DNet", "1", {{VariantKind::dnet, 1.0}}},
      {"PDNet", "1", {{VariantKind::pdnet, 1.0}}},
  };
  if (config.alpha_groups) {
    for (const auto* group : {&config.low_alphas, &config.high_alphas}) {
      if (group->empty()) throw ConfigError("ablation alpha groups must not be empty");
      RunSpec spec{"PDNet", alpha_label(*group), {}};
      for (double a : *group) {
        if (!(a > 0.0)) throw ConfigError("ablation alphas must be > 0");
        spec.members.push_back({VariantKind::pdnet, a});
      }
      specs.push_back(spec);
    }
  }
  if (config.alpha_zero_row) specs.push_back({"PDNet", "0", {{VariantKind::pdnet, 0.0}}});

  if (config.checkpoint_dir) std::filesystem::create_directories(*config.checkpoint_dir);
  MasterConfig rgb_master = config.master;
  rgb_master.input_channels = 3;
  const FusionSpec fusion{config.fusion_mode, 1.0, false};

  std::vector<AblationRow> rows;
  std::vector<AblationRow> means(specs.size());
  for (std::uint64_t seed : config.seeds) {
    const std::string tag = "seed" + std::to_string(seed);
    TrainConfig pre = config.pretrain;
    pre.seed = seed;
    const TrainResult prior =
        pretrain_master(pre, rgb_master, pretrain_set.empty() ? train : pretrain_set, {}, progress);
    if (config.checkpoint_dir) save_checkpoint(prior.params, *config.checkpoint_dir / (tag + "_prior.pdnc"));

    struct Job {
      std::size_t spec;
      AblationVariant variant;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      for (const auto& v : specs[i].members) jobs.push_back({i, v});
    }
    std::vector<MetricsReport> reports(jobs.size());
    auto run_job = [&](std::size_t j) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      const AblationVariant& v = jobs[j].variant;
      TrainResult r = train_pdnet(tc, rgb_master, config.subnet, fusion, v, v.use_prior() ? &prior.params : nullptr,
                                  train, test, progress);
      reports[j] = evaluate_model(r.params, test, config.train.metrics);
      if (config.checkpoint_dir && (!v.use_depth_branch() || v.alpha > 0.0)) {
        std::string stem = tag + "_" + std::string(to_string(v.kind));
        if (v.use_depth_branch()) stem += "_a" + format_double(v.alpha);
        save_checkpoint(r.params, *config.checkpoint_dir / (stem + ".pdnc"));
        std::ofstream log(*config.checkpoint_dir / (stem + "_log.csv"), std::ios::binary);
        write_log_csv(r.log, log);
      }
    };
    if (config.jobs <= 1) {
      for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
      // Runs share only read-only inputs; results land in fixed slots.
      for (std::size_t base = 0; base < jobs.size(); base += config.jobs) {
        std::vector<std::future<void>> wave;
        for (std::size_t j = base; j < std::min(jobs.size(), base + config.jobs); ++j) {
          wave.push_back(std::async(std::launch::async, run_job, j));
        }
        for (auto& f : wave) f.get();
      }
    }

    for (std::size_t i = 0; i < specs.size(); ++i) {
      AblationRow row{specs[i].variant, specs[i].alpha, 0.0, 0.0, std::to_string(seed)};
      std::size_t count = 0;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].spec != i) continue;
        row.fbeta += reports[j].f_beta;
        row.mae += reports[j].mae;
        ++count;
      }
      row.fbeta /= static_cast<double>(count);
      row.mae /= static_cast<double>(count);
      rows.push_back(row);
      means[i].fbeta += row.fbeta / static_cast<double>(config.seeds.size());
      means[i].mae += row.mae / static_cast<double>(config.seeds.size());
    }
  }
  if (config.seeds.size() > 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      rows.push_back({specs[i].variant, specs[i].alpha, means[i].fbeta, means[i].mae, "mean"});
    }
  }
  return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out) {
  out << "variant,alpha,fbeta,mae,seed\n";
  for (const AblationRow& r : rows) {
    out << r.variant << "," << r.alpha << "," << format_double(r.fbeta) << "," << format_double(r.mae) << ","
        << r.seed << "\n";
  }
}

}  // namespace pdnet
