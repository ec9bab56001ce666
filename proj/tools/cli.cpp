#include "pdnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pdnet/checkpoint.hpp"
#include "pdnet/error.hpp"
#include "pdnet/verify.hpp"

namespace pdnet::cli {
namespace {

namespace fs = std::filesystem;

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  return out;
}

std::vector<KeyDoc> build_catalog() {
  const RunConfig d;
  std::vector<KeyDoc> c{
      {"data.n", std::to_string(d.data_n), "samples written by gen-data"},
      {"data.seed", std::to_string(d.data_seed), "gen-data seed; sample i uses seed + i"},
      {"data.split", "true", "gen-data writes train/ and test/ (75/25) instead of one flat directory"},
      {"scene.preset", "default", "default | rgb_ambiguous; applied before the other scene keys"},
  };
  KeyValues scene;
  write_scene_keys(d.scene, scene);
  const std::map<std::string, std::string> scene_docs{
      {"scene.size", "image side in pixels"},
      {"scene.min_shapes", "fewest salient shapes per image (1..3)"},
      {"scene.max_shapes", "most salient shapes per image (1..3)"},
      {"scene.kinds", "comma list of circle, rectangle, triangle"},
      {"scene.color_contrast", "RGB separability of objects, 0..1"},
      {"scene.depth_contrast", "depth gap between objects and background, 0..1"},
      {"scene.noise_std", "Gaussian noise on rgb and depth"},
      {"scene.background", "flat | gradient | checker"},
      {"scene.distractors", "non-salient RGB-only shapes per image"},
      {"scene.distractor_contrast", "RGB contrast of distractors, 0..1"},
  };
  for (const auto& [k, v] : scene.entries()) c.push_back({k, v, scene_docs.at(k)});

  const KeyValues model = to_key_values(d.master, std::nullopt, d.fusion);
  const std::map<std::string, std::string> model_docs{
      {"master.input_channels", "input channels of the master network (MNet training forces 4)"},
      {"master.stage_channels", "encoder widths, one per block"},
      {"master.convs_per_block", "3x3 convs per encoder block"},
      {"master.input_size", "network input side; data is resized to it"},
      {"master.side_outputs", "decoder side outputs feeding the head"},
      {"fusion.mode", "gate | add | concat"},
      {"fusion.alpha", "depth feature weight, or auto (channel ratio)"},
  };
  for (const auto& [k, v] : model.entries()) {
    if (model_docs.count(k)) c.push_back({k, v, model_docs.at(k)});
  }
  c.push_back({"subnet.input_channels", "1", "depth channels"});
  c.push_back({"subnet.stage_channels", "(master prefix)", "depth branch widths up to the fusion stage"});
  c.push_back({"subnet.fusion_stage", "(deepest)", "encoder block whose pooled output is fused"});
  c.push_back({"model.variant", "PDNet", "train: MNet | PNet | DNet | PDNet"});

  const std::map<std::string, std::string> train_docs{
      {"epochs", "epochs"},
      {"batch_size", "mini-batch size"},
      {"lr_start", "learning rate of the first epoch"},
      {"lr_end", "learning rate of the last epoch"},
      {"seed", "initialisation and shuffle seed"},
      {"side_weight", "weight of the side-output loss"},
      {"shuffle", "reshuffle every epoch"},
      {"eval_every", "test evaluation period in epochs (0: last only)"},
  };
  for (const auto& [prefix, cfg] : {std::pair{"pretrain.", d.pretrain}, std::pair{"train.", d.train}}) {
    KeyValues kv;
    write_train_keys(cfg, prefix, kv);
    for (const auto& [k, v] : kv.entries()) c.push_back({k, v, train_docs.at(k.substr(std::strlen(prefix)))});
  }
  c.push_back({"metrics.beta2", format_double(d.metrics.beta2), "beta^2 of the F-measure"});
  c.push_back({"metrics.f_mode", "adaptive", "adaptive | max-curve"});
  c.push_back({"ablate.seeds", seed_list(d.ablate_seeds), "comma list of seeds; several add mean rows"});
  c.push_back({"ablate.low_alphas", format_list(d.low_alphas), "alphas averaged into the first group row"});
  c.push_back({"ablate.high_alphas", format_list(d.high_alphas), "alphas averaged into the second group row"});
  c.push_back({"ablate.alpha_groups", "true", "train the two averaged alpha groups"});
  c.push_back({"ablate.alpha_zero_row", "false", "extra PDNet row at alpha = 0"});
  c.push_back({"ablate.jobs", "1", "concurrent runs per seed"});
  c.push_back({"grad_check.seed", "0", "seed of the gradient-check inputs"});
  c.push_back({"grad_check.op_seeds", "3", "random cases per op"});
  return c;
}

std::string catalog_text() {
  std::ostringstream out;
  out << "Configuration keys (key=value files via --config, single keys via --set):\n";
  for (const KeyDoc& k : key_catalog()) {
    out << "  " << k.key << " = " << k.default_value << "\n      " << k.doc << "\n";
  }
  return out.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> out;
  for (std::size_t v : parse_size_list(key, value)) out.push_back(v);
  if (out.empty()) throw ConfigError(key + ": needs at least one seed");
  return out;
}

struct DataSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

std::vector<Sample> load_resized(const fs::path& dir, std::size_t size, std::ostream& err) {
  std::vector<std::string> warnings;
  std::vector<Sample> samples = load_dataset_dir(dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  for (Sample& s : samples) {
    if (s.rgb.shape().h != size || s.rgb.shape().w != size) s = preprocess(s, size);
  }
  return samples;
}

// A directory with train/ and test/ subdirectories, or one flat directory
// used for training only.
DataSplit load_split(const fs::path& dir, std::size_t size, std::ostream& err) {
  DataSplit out;
  if (fs::is_directory(dir / "train")) {
    out.train = load_resized(dir / "train", size, err);
    if (fs::is_directory(dir / "test")) out.test = load_resized(dir / "test", size, err);
  } else {
    out.train = load_resized(dir, size, err);
  }
  if (out.train.empty()) throw DataError("no samples found in " + dir.string());
  return out;
}

// Evaluation reads test/ when present, otherwise the directory itself.
std::vector<Sample> load_eval_set(const fs::path& dir, std::optional<std::size_t> size, std::ostream& err) {
  const fs::path from = fs::is_directory(dir / "test") ? dir / "test" : dir;
  std::vector<Sample> samples;
  if (size) {
    samples = load_resized(from, *size, err);
  } else {
    std::vector<std::string> warnings;
    samples = load_dataset_dir(from, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
  }
  if (samples.empty()) throw DataError("no samples found in " + from.string());
  return samples;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

fs::path default_log_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension();
  return p.string() + "_log.csv";
}

Tensorf image_to_tensor(const pnm::Image& img) {
  Tensorf t = Tensorf::zeros({1, img.channels, img.height, img.width});
  const std::size_t plane = img.width * img.height;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) t.data()[c * plane + p] = img.pixels[p * img.channels + c] / 255.0f;
  }
  return t;
}

}  // namespace

const std::vector<KeyDoc>& key_catalog() {
  static const std::vector<KeyDoc> catalog = build_catalog();
  return catalog;
}

RunConfig make_run_config(const KeyValues& kv) {
  std::map<std::string, bool> known;
  for (const KeyDoc& k : key_catalog()) known[k.key] = true;
  for (const auto& [key, value] : kv.entries()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' (see --help for the key list)");
  }

  RunConfig c;
  apply_scene_keys(kv, c.scene);
  apply_train_keys(kv, "pretrain.", c.pretrain);
  apply_train_keys(kv, "train.", c.train);

  KeyValues model;
  for (const auto& [key, value] : kv.entries()) {
    if (key.starts_with("master.") || key.starts_with("subnet.") || key.starts_with("fusion.")) model.set(key, value);
  }
  model.set("subnet.enabled", "true");
  std::optional<SubNetConfig> sub;
  from_key_values(model, c.master, sub, c.fusion);
  c.subnet = *sub;

  for (const auto& [key, value] : kv.entries()) {
    if (key == "data.n") {
      c.data_n = parse_size(key, value);
    } else if (key == "data.seed") {
      c.data_seed = static_cast<std::uint64_t>(parse_size(key, value));
    } else if (key == "data.split") {
      c.data_split = parse_bool(key, value);
    } else if (key == "model.variant") {
      c.variant = parse_variant(value);
    } else if (key == "metrics.beta2") {
      c.metrics.beta2 = parse_double(key, value);
    } else if (key == "metrics.f_mode") {
      c.metrics.f_mode = parse_f_mode(value);
    } else if (key == "ablate.seeds") {
      c.ablate_seeds = parse_seeds(key, value);
    } else if (key == "ablate.low_alphas") {
      c.low_alphas = parse_double_list(key, value);
    } else if (key == "ablate.high_alphas") {
      c.high_alphas = parse_double_list(key, value);
    } else if (key == "ablate.alpha_groups") {
      c.alpha_groups = parse_bool(key, value);
    } else if (key == "ablate.alpha_zero_row") {
      c.alpha_zero_row = parse_bool(key, value);
    } else if (key == "ablate.jobs") {
      c.jobs = parse_size(key, value);
    } else if (key == "grad_check.seed") {
      c.grad_check_seed = static_cast<std::uint64_t>(parse_size(key, value));
    } else if (key == "grad_check.op_seeds") {
      c.grad_check_op_seeds = parse_size(key, value);
    }
  }
  if (!(c.metrics.beta2 > 0.0)) throw ConfigError("metrics.beta2 must be > 0");
  c.pretrain.metrics = c.metrics;
  c.train.metrics = c.metrics;
  c.scene.validate();
  c.master.validate();
  return c;
}

pnm::Image saliency_to_pgm(const Tensorf& saliency) {
  const Shape& s = saliency.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("saliency map must be [1,1,H,W], got " + s.str());
  pnm::Image img{s.w, s.h, 1, std::vector<std::uint8_t>(s.plane())};
  for (std::size_t p = 0; p < s.plane(); ++p) {
    const double v = std::clamp(static_cast<double>(saliency.data()[p]), 0.0, 1.0);
    img.pixels[p] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return img;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RGB-D salient object detection: data generation, training, evaluation", "pdnet"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(catalog_text());

  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_file, "key=value configuration file");
  app.add_option("--set", sets, "override one key, KEY=VALUE (repeatable)");
  app.add_option("--seed", seed, "seed for the subcommand (data.seed, pretrain/train.seed, grad_check.seed)");
  app.add_flag("-q,--quiet", quiet, "no progress output");

  std::string out_path, data_dir, checkpoint, prior, log_path, pr_path, predictions_dir, pretrain_data, ckpt_dir;
  std::string rgb_path, depth_path, variant_name;
  std::optional<std::size_t> n, epochs, jobs;
  std::optional<double> alpha;
  std::optional<std::string> seeds_text, f_mode;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset (PPM/PGM triples)");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--n", n, "number of samples (data.n)");

  auto* pre = app.add_subcommand("pretrain", "train the master network on rgb only and save the prior");
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--out", out_path, "checkpoint path")->required();
  pre->add_option("--log", log_path, "CSV log path (default: <out>_log.csv)");
  pre->add_option("--epochs", epochs, "pretrain.epochs");

  auto* train = app.add_subcommand("train", "train one network variant");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_path, "checkpoint path")->required();
  train->add_option("--prior", prior, "prior checkpoint (PNet, PDNet)");
  train->add_option("--variant", variant_name, "MNet | PNet | DNet | PDNet (model.variant)");
  train->add_option("--alpha", alpha, "fusion weight (fusion.alpha)");
  train->add_option("--log", log_path, "CSV log path (default: <out>_log.csv)");
  train->add_option("--epochs", epochs, "train.epochs");

  auto* eval = app.add_subcommand("eval", "score saliency maps against ground truth");
  eval->add_option("--data", data_dir, "dataset directory (test/ is used when present)")->required();
  auto* eval_ckpt = eval->add_option("--checkpoint", checkpoint, "network to evaluate");
  auto* eval_pred = eval->add_option("--predictions", predictions_dir, "directory of <id>.pgm saliency maps");
  eval_ckpt->excludes(eval_pred);
  eval->add_option("--out", out_path, "metrics CSV (default: stdout)");
  eval->add_option("--pr", pr_path, "precision-recall CSV");
  eval->add_option("--f-mode", f_mode, "adaptive | max-curve (metrics.f_mode)");

  auto* ablate = app.add_subcommand("ablate", "train every variant and write the ablation table");
  ablate->add_option("--data", data_dir, "dataset directory with train/ and test/")->required();
  ablate->add_option("--out", out_path, "ablation CSV")->required();
  ablate->add_option("--pretrain-data", pretrain_data, "rgb dataset for the prior (default: the train split)");
  ablate->add_option("--checkpoints", ckpt_dir, "directory for every trained network and its log");
  ablate->add_option("--seeds", seeds_text, "comma list of seeds (ablate.seeds)");
  ablate->add_option("--jobs", jobs, "concurrent runs (ablate.jobs)");

  auto* infer = app.add_subcommand("infer", "write 8-bit PGM saliency maps");
  infer->add_option("--checkpoint", checkpoint, "network")->required();
  auto* infer_data = infer->add_option("--data", data_dir, "dataset directory; writes <out>/<id>.pgm");
  auto* infer_rgb = infer->add_option("--rgb", rgb_path, "single rgb image (P6)");
  infer->add_option("--depth", depth_path, "depth image (P5) for the single-image mode")->needs(infer_rgb);
  infer_data->excludes(infer_rgb);
  infer->add_option("--out", out_path, "output PGM, or directory with --data")->required();

  auto* grad = app.add_subcommand("grad-check", "gradient checks of every op and of the full loss");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ExitCode::ok : ExitCode::usage;
  }

  const ProgressFn progress = [&](const std::string& line) {
    if (!quiet) err << line << std::endl;
  };

  try {
    KeyValues kv;
    if (!config_file.empty()) {
      std::ifstream in(config_file, std::ios::binary);
      if (!in) throw ConfigError("cannot read config file " + config_file);
      std::stringstream text;
      text << in.rdbuf();
      kv = KeyValues::parse(text.str(), config_file);
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) {
      const std::string v = std::to_string(*seed);
      if (gen->parsed()) kv.set("data.seed", v);
      if (pre->parsed()) kv.set("pretrain.seed", v);
      if (train->parsed()) kv.set("train.seed", v);
      if (grad->parsed()) kv.set("grad_check.seed", v);
      if (ablate->parsed()) kv.set("ablate.seeds", v);
    }
    if (n) kv.set("data.n", std::to_string(*n));
    if (epochs) kv.set(pre->parsed() ? "pretrain.epochs" : "train.epochs", std::to_string(*epochs));
    if (!variant_name.empty()) kv.set("model.variant", variant_name);
    if (alpha) kv.set("fusion.alpha", format_double(*alpha));
    if (f_mode) kv.set("metrics.f_mode", *f_mode);
    if (seeds_text) kv.set("ablate.seeds", *seeds_text);
    if (jobs) kv.set("ablate.jobs", std::to_string(*jobs));
    const RunConfig cfg = make_run_config(kv);

    if (gen->parsed()) {
      const fs::path dir(out_path);
      if (cfg.data_split) {
        const DatasetSplit split = gen_dataset(cfg.scene, cfg.data_n, cfg.data_seed);
        export_dataset_dir(split.train, dir / "train");
        export_dataset_dir(split.test, dir / "test");
        progress("wrote " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) +
                 " test samples to " + dir.string());
      } else {
        const auto samples = gen_samples(cfg.scene, cfg.data_n, cfg.data_seed);
        export_dataset_dir(samples, dir);
        progress("wrote " + std::to_string(samples.size()) + " samples to " + dir.string());
      }
      return ExitCode::ok;
    }

    if (pre->parsed()) {
      MasterConfig m = cfg.master;
      m.input_channels = 3;
      const DataSplit data = load_split(data_dir, m.input_size, err);
      const TrainResult r = pretrain_master(cfg.pretrain, m, data.train, data.test, progress);
      save_checkpoint(r.params, out_path);
      std::ostringstream log;
      write_log_csv(r.log, log);
      write_text(log_path.empty() ? default_log_path(out_path) : fs::path(log_path), log.str());
      return ExitCode::ok;
    }

    if (train->parsed()) {
      const DataSplit data = load_split(data_dir, cfg.master.input_size, err);
      std::optional<PDNetParams<float>> prior_params;
      if (!prior.empty()) prior_params = load_checkpoint<float>(prior);
      const AblationVariant variant{cfg.variant, cfg.fusion.alpha};
      const TrainResult r = train_pdnet(cfg.train, cfg.master, cfg.subnet, cfg.fusion, variant,
                                        prior_params ? &*prior_params : nullptr, data.train, data.test, progress);
      save_checkpoint(r.params, out_path);
      std::ostringstream log;
      write_log_csv(r.log, log);
      write_text(log_path.empty() ? default_log_path(out_path) : fs::path(log_path), log.str());
      return ExitCode::ok;
    }

    if (eval->parsed()) {
      MetricsReport report;
      if (!checkpoint.empty()) {
        PDNetParams<float> params = load_checkpoint<float>(checkpoint);
        const auto samples = load_eval_set(data_dir, params.master.input_size, err);
        report = evaluate_model(params, samples, cfg.metrics);
      } else if (!predictions_dir.empty()) {
        const auto samples = load_eval_set(data_dir, std::nullopt, err);
        std::vector<Tensorf> predictions, masks;
        for (const Sample& s : samples) {
          const fs::path p = fs::path(predictions_dir) / (s.id + ".pgm");
          if (!fs::exists(p)) throw DataError("no prediction for sample '" + s.id + "' (expected " + p.string() + ")");
          const pnm::Image img = pnm::read(p);
          if (img.channels != 1) throw DataError(p.string() + ": expected a P5 image");
          predictions.push_back(image_to_tensor(img));
          masks.push_back(s.gt);
        }
        report = evaluate_predictions(predictions, masks, cfg.metrics);
      } else {
        throw ConfigError("eval needs --checkpoint or --predictions");
      }
      std::ostringstream metrics;
      write_metrics_csv(report, metrics);
      if (out_path.empty()) {
        out << metrics.str();
      } else {
        write_text(out_path, metrics.str());
      }
      if (!pr_path.empty()) {
        std::ostringstream pr;
        write_pr_csv(report, pr);
        write_text(pr_path, pr.str());
      }
      return ExitCode::ok;
    }

    if (ablate->parsed()) {
      MasterConfig m = cfg.master;
      const DataSplit data = load_split(data_dir, m.input_size, err);
      if (data.test.empty()) throw DataError(data_dir + " has no test/ split");
      std::vector<Sample> prior_data;
      if (!pretrain_data.empty()) prior_data = load_split(pretrain_data, m.input_size, err).train;
      AblationConfig ac;
      ac.pretrain = cfg.pretrain;
      ac.train = cfg.train;
      ac.master = m;
      ac.subnet = cfg.subnet;
      ac.fusion_mode = cfg.fusion.mode;
      ac.low_alphas = cfg.low_alphas;
      ac.high_alphas = cfg.high_alphas;
      ac.seeds = cfg.ablate_seeds;
      ac.alpha_groups = cfg.alpha_groups;
      ac.alpha_zero_row = cfg.alpha_zero_row;
      ac.jobs = cfg.jobs;
      if (!ckpt_dir.empty()) ac.checkpoint_dir = fs::path(ckpt_dir);
      const auto rows = run_ablation(ac, data.train, data.test, progress, prior_data);
      std::ostringstream csv;
      write_ablation_csv(rows, csv);
      write_text(out_path, csv.str());
      return ExitCode::ok;
    }

    if (infer->parsed()) {
      PDNetParams<float> params = load_checkpoint<float>(checkpoint);
      const std::size_t size = params.master.input_size;
      const bool needs_depth = params.has_subnet() || params.master.input_channels == 4;
      if (!data_dir.empty()) {
        const auto samples = load_eval_set(data_dir, size, err);
        const auto maps = predict(params, samples);
        fs::create_directories(out_path);
        for (std::size_t i = 0; i < samples.size(); ++i) {
          pnm::write(fs::path(out_path) / (samples[i].id + ".pgm"), saliency_to_pgm(maps[i]));
        }
        progress("wrote " + std::to_string(maps.size()) + " saliency maps to " + out_path);
        return ExitCode::ok;
      }
      if (rgb_path.empty()) throw ConfigError("infer needs --data or --rgb");
      if (needs_depth && depth_path.empty()) throw ConfigError("this network reads depth; pass --depth");
      const pnm::Image rgb = pnm::read(rgb_path);
      if (rgb.channels != 3) throw DataError(rgb_path + ": expected a colour (P6) image");
      Sample s{image_to_tensor(rgb), Tensorf::zeros({1, 1, rgb.height, rgb.width}),
               Tensorf::zeros({1, 1, rgb.height, rgb.width}), fs::path(rgb_path).stem().string()};
      if (!depth_path.empty()) {
        const pnm::Image depth = pnm::read(depth_path);
        if (depth.channels != 1) throw DataError(depth_path + ": expected a P5 image");
        if (depth.width != rgb.width || depth.height != rgb.height) {
          throw DataError(depth_path + ": size differs from " + rgb_path);
        }
        s.depth = image_to_tensor(depth);
      }
      if (rgb.width != size || rgb.height != size) s = preprocess(s, size);
      const std::vector<Sample> one{s};
      const auto maps = predict(params, one);
      pnm::write(out_path, saliency_to_pgm(maps[0]));
      return ExitCode::ok;
    }

    if (grad->parsed()) {
      GradSuiteOptions opts;
      opts.seed = cfg.grad_check_seed;
      opts.op_seeds = cfg.grad_check_op_seeds;
      bool all = true;
      for (const GradSuiteEntry& e : run_grad_suite(opts)) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-6s %-24s %-6s max_rel %.3e < %.0e\n", e.passed() ? "PASS" : "FAIL",
                      e.name.c_str(), e.precision.c_str(), e.max_rel_error, e.threshold);
        out << line;
        all = all && e.passed();
      }
      return all ? ExitCode::ok : ExitCode::verification;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::runtime;
  }
  return ExitCode::usage;
}

}  // namespace pdnet::cli
