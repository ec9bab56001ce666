#include "pdnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>

#include "pdnet/error.hpp"
#include "pdnet/ops.hpp"
#include "pdnet/pnm.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {
namespace {

constexpr double kMinForeground = 0.05;
constexpr double kMaxForeground = 0.40;
constexpr int kSceneAttempts = 100;

using Rgb = std::array<double, 3>;

struct Shape2d {
  ShapeKind kind;
  double cx, cy;
  double a, b;                    // radius / half extents
  std::array<double, 6> tri{};    // triangle vertices x0,y0,x1,y1,x2,y2

  bool contains(double x, double y) const {
    switch (kind) {
      case ShapeKind::circle:
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= a * a;
      case ShapeKind::rectangle:
        return std::abs(x - cx) <= a && std::abs(y - cy) <= b;
      case ShapeKind::triangle: {
        auto edge = [&](int i, int j) {
          return (tri[2 * j] - tri[2 * i]) * (y - tri[2 * i + 1]) - (tri[2 * j + 1] - tri[2 * i + 1]) * (x - tri[2 * i]);
        };
        const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

Shape2d random_shape(const SceneConfig& cfg, Rng& rng) {
  const double s = static_cast<double>(cfg.size);
  Shape2d sh{};
  sh.kind = cfg.kinds[rng.below(cfg.kinds.size())];
  sh.cx = rng.uniform(0.15, 0.85) * s;
  sh.cy = rng.uniform(0.15, 0.85) * s;
  switch (sh.kind) {
    case ShapeKind::circle:
      sh.a = rng.uniform(0.08, 0.22) * s;
      break;
    case ShapeKind::rectangle:
      sh.a = rng.uniform(0.07, 0.22) * s;
      sh.b = rng.uniform(0.07, 0.22) * s;
      break;
    case ShapeKind::triangle: {
      const double r = rng.uniform(0.12, 0.30) * s;
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int k = 0; k < 3; ++k) {
        const double ang = theta + 2.0 * std::numbers::pi * k / 3.0 + rng.uniform(-0.4, 0.4);
        sh.tri[2 * k] = sh.cx + r * std::cos(ang);
        sh.tri[2 * k + 1] = sh.cy + r * std::sin(ang);
      }
      break;
    }
  }
  return sh;
}

// A colour far from `base` in every channel.
Rgb contrasting_colour(const Rgb& base, Rng& rng) {
  Rgb c{};
  for (int k = 0; k < 3; ++k) c[k] = base[k] > 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0);
  return c;
}

// Unit ramp in [0,1] along a random direction.
struct Ramp {
  double dx, dy;
  double operator()(double x, double y, double size) const {
    return std::clamp(0.5 + (dx * (x - size / 2) + dy * (y - size / 2)) / size, 0.0, 1.0);
  }
};

Ramp random_ramp(Rng& rng) {
  const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {std::cos(ang), std::sin(ang)};
}

struct Scene {
  std::vector<double> rgb;    // 3 planes
  std::vector<double> depth;
  std::vector<double> gt;
  double foreground = 0.0;
};

Scene render(const SceneConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.size;
  const double s = static_cast<double>(n);
  const std::size_t plane = n * n;
  Scene sc;
  sc.rgb.assign(3 * plane, 0.0);
  sc.depth.assign(plane, 0.0);
  sc.gt.assign(plane, 0.0);

  // Background colour.
  Rgb base{};
  for (double& v : base) v = rng.uniform(0.25, 0.75);
  Rgb swing{};
  for (double& v : swing) v = rng.uniform(-0.25, 0.25);
  const Ramp colour_ramp = random_ramp(rng);
  const std::size_t cell = std::max<std::size_t>(2, n / 8);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double f = 0.0;
      switch (cfg.background) {
        case Background::flat:
          break;
        case Background::gradient:
          f = 2.0 * colour_ramp(j + 0.5, i + 0.5, s) - 1.0;
          break;
        case Background::checker:
          f = ((i / cell + j / cell) % 2 == 0) ? 1.0 : -1.0;
          break;
      }
      for (int k = 0; k < 3; ++k) sc.rgb[k * plane + i * n + j] = std::clamp(base[k] + f * swing[k], 0.0, 1.0);
    }
  }

  // Background depth spans [0, far_max]; objects start depth_contrast above.
  const double far_max = 0.5 * (1.0 - cfg.depth_contrast);
  const double near_min = far_max + cfg.depth_contrast;
  const Ramp depth_ramp = random_ramp(rng);
  const double depth_offset = rng.uniform(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double t = 0.5 * depth_ramp(j + 0.5, i + 0.5, s) + depth_offset;
      sc.depth[i * n + j] = far_max * std::clamp(t, 0.0, 1.0);
    }
  }

  auto paint = [&](const Shape2d& sh, const Rgb& colour, double contrast, bool salient, double depth) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!sh.contains(j + 0.5, i + 0.5)) continue;
        const std::size_t p = i * n + j;
        for (int k = 0; k < 3; ++k) {
          double& v = sc.rgb[k * plane + p];
          v = (1.0 - contrast) * v + contrast * colour[k];
        }
        if (salient) {
          sc.gt[p] = 1.0;
          sc.depth[p] = depth;
        }
      }
    }
  };

  for (std::size_t d = 0; d < cfg.distractors; ++d) {
    const Shape2d sh = random_shape(cfg, rng);
    paint(sh, contrasting_colour(base, rng), cfg.distractor_contrast, false, 0.0);
  }
  const std::size_t count = cfg.min_shapes + rng.below(cfg.max_shapes - cfg.min_shapes + 1);
  for (std::size_t k = 0; k < count; ++k) {
    const Shape2d sh = random_shape(cfg, rng);
    const Rgb colour = contrasting_colour(base, rng);
    const double depth = near_min + rng.uniform(0.0, 0.5) * (1.0 - near_min);
    paint(sh, colour, cfg.color_contrast, true, depth);
  }

  double fg = 0.0;
  for (double v : sc.gt) fg += v;
  sc.foreground = fg / static_cast<double>(plane);
  return sc;
}

Tensorf to_tensor(const std::vector<double>& v, std::size_t channels, std::size_t size) {
  std::vector<float> data(v.begin(), v.end());
  return Tensorf::from_data({1, channels, size, size}, std::move(data));
}

double bilinear(std::span<const float> plane, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = (1 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
  const double bottom = (1 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
  return (1 - fy) * top + fy * bottom;
}

Tensorf resize_bilinear(const Tensorf& t, std::size_t size) {
  const Shape& s = t.shape();
  Tensorf out = Tensorf::zeros({s.n, s.c, size, size});
  const double sy = static_cast<double>(s.h) / size;
  const double sx = static_cast<double>(s.w) / size;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    auto src = t.data().subspan(nc * s.plane(), s.plane());
    auto dst = out.data().subspan(nc * size * size, size * size);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const double v = bilinear(src, s.h, s.w, (i + 0.5) * sy - 0.5, (j + 0.5) * sx - 0.5);
        dst[i * size + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Tensorf resize_nearest(const Tensorf& t, std::size_t size) {
  const Shape& s = t.shape();
  Tensorf out = Tensorf::zeros({s.n, s.c, size, size});
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t si = std::min(s.h - 1, static_cast<std::size_t>((i + 0.5) * s.h / size));
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t sj = std::min(s.w - 1, static_cast<std::size_t>((j + 0.5) * s.w / size));
        out.data()[nc * size * size + i * size + j] = t.data()[nc * s.plane() + si * s.w + sj];
      }
    }
  }
  return out;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

pnm::Image to_image(const Tensorf& t) {
  const Shape& s = t.shape();
  pnm::Image img{s.w, s.h, s.c, std::vector<std::uint8_t>(s.c * s.plane())};
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t p = 0; p < s.plane(); ++p) img.pixels[p * s.c + c] = quantize(t.data()[c * s.plane() + p]);
  }
  return img;
}

Tensorf from_image(const pnm::Image& img, bool binarize) {
  Tensorf t = Tensorf::zeros({1, img.channels, img.height, img.width});
  const std::size_t plane = img.width * img.height;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t v = img.pixels[p * img.channels + c];
      t.data()[c * plane + p] = binarize ? (v >= 128 ? 1.0f : 0.0f) : static_cast<float>(v) / 255.0f;
    }
  }
  return t;
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle:
      return "circle";
    case ShapeKind::rectangle:
      return "rectangle";
    case ShapeKind::triangle:
      return "triangle";
  }
  return "unknown";
}

std::string_view to_string(Background background) {
  switch (background) {
    case Background::flat:
      return "flat";
    case Background::gradient:
      return "gradient";
    case Background::checker:
      return "checker";
  }
  return "unknown";
}

void SceneConfig::validate() const {
  if (size < 8) throw ConfigError("scene.size must be at least 8 (got " + std::to_string(size) + ")");
  if (min_shapes < 1 || max_shapes > 3 || min_shapes > max_shapes) {
    throw ConfigError("scene.min_shapes/scene.max_shapes must satisfy 1 <= min <= max <= 3");
  }
  if (kinds.empty()) throw ConfigError("scene.kinds must name at least one shape kind");
  auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!unit(color_contrast)) throw ConfigError("scene.color_contrast must lie in [0,1]");
  if (!unit(depth_contrast)) throw ConfigError("scene.depth_contrast must lie in [0,1]");
  if (!unit(distractor_contrast)) throw ConfigError("scene.distractor_contrast must lie in [0,1]");
  if (!std::isfinite(noise_std) || noise_std < 0.0) throw ConfigError("scene.noise_std must be >= 0");
  if (distractors > 8) throw ConfigError("scene.distractors must be at most 8");
}

SceneConfig SceneConfig::rgb_ambiguous() {
  SceneConfig c;
  c.color_contrast = 0.1;
  c.depth_contrast = 0.6;
  c.noise_std = 0.04;
  c.background = Background::checker;
  c.distractors = 2;
  c.distractor_contrast = 0.6;
  return c;
}

void apply_scene_keys(const KeyValues& kv, SceneConfig& c) {
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with("scene.")) continue;
    if (key == "scene.preset") {
      if (value == "default") {
        c = SceneConfig{};
      } else if (value == "rgb_ambiguous") {
        c = SceneConfig::rgb_ambiguous();
      } else {
        throw ConfigError("scene.preset: unknown preset '" + value + "' (expected default or rgb_ambiguous)");
      }
    }
  }
  for (const auto& [key, value] : kv.entries()) {
    if (!key.starts_with("scene.") || key == "scene.preset") continue;
    if (key == "scene.size") {
      c.size = parse_size(key, value);
    } else if (key == "scene.min_shapes") {
      c.min_shapes = parse_size(key, value);
    } else if (key == "scene.max_shapes") {
      c.max_shapes = parse_size(key, value);
    } else if (key == "scene.kinds") {
      c.kinds.clear();
      std::size_t start = 0;
      while (start <= value.size()) {
        const auto comma = value.find(',', start);
        std::string part = value.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        part.erase(0, part.find_first_not_of(' '));
        part.erase(part.find_last_not_of(' ') + 1);
        if (part == "circle") {
          c.kinds.push_back(ShapeKind::circle);
        } else if (part == "rectangle") {
          c.kinds.push_back(ShapeKind::rectangle);
        } else if (part == "triangle") {
          c.kinds.push_back(ShapeKind::triangle);
        } else {
          throw ConfigError("scene.kinds: unknown shape '" + part + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    } else if (key == "scene.color_contrast") {
      c.color_contrast = parse_double(key, value);
    } else if (key == "scene.depth_contrast") {
      c.depth_contrast = parse_double(key, value);
    } else if (key == "scene.noise_std") {
      c.noise_std = parse_double(key, value);
    } else if (key == "scene.background") {
      if (value == "flat") {
        c.background = Background::flat;
      } else if (value == "gradient") {
        c.background = Background::gradient;
      } else if (value == "checker") {
        c.background = Background::checker;
      } else {
        throw ConfigError("scene.background: unknown background '" + value + "'");
      }
    } else if (key == "scene.distractors") {
      c.distractors = parse_size(key, value);
    } else if (key == "scene.distractor_contrast") {
      c.distractor_contrast = parse_double(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
}

void write_scene_keys(const SceneConfig& c, KeyValues& kv) {
  kv.set("scene.size", std::to_string(c.size));
  kv.set("scene.min_shapes", std::to_string(c.min_shapes));
  kv.set("scene.max_shapes", std::to_string(c.max_shapes));
  std::string kinds;
  for (std::size_t i = 0; i < c.kinds.size(); ++i) kinds += (i ? "," : "") + std::string(to_string(c.kinds[i]));
  kv.set("scene.kinds", kinds);
  kv.set("scene.color_contrast", format_double(c.color_contrast));
  kv.set("scene.depth_contrast", format_double(c.depth_contrast));
  kv.set("scene.noise_std", format_double(c.noise_std));
  kv.set("scene.background", std::string(to_string(c.background)));
  kv.set("scene.distractors", std::to_string(c.distractors));
  kv.set("scene.distractor_contrast", format_double(c.distractor_contrast));
}

Sample gen_sample(const SceneConfig& config, std::uint64_t seed, std::string id) {
  config.validate();
  const Rng root(seed);
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    Rng rng = root.split(static_cast<std::uint64_t>(attempt));
    Scene sc = render(config, rng);
    if (sc.foreground < kMinForeground || sc.foreground > kMaxForeground) continue;
    if (config.noise_std > 0.0) {
      for (double& v : sc.rgb) v = std::clamp(v + config.noise_std * rng.normal(), 0.0, 1.0);
      for (double& v : sc.depth) v = std::clamp(v + config.noise_std * rng.normal(), 0.0, 1.0);
    }
    Sample out;
    out.rgb = to_tensor(sc.rgb, 3, config.size);
    out.depth = to_tensor(sc.depth, 1, config.size);
    out.gt = to_tensor(sc.gt, 1, config.size);
    out.id = id.empty() ? "seed" + std::to_string(seed) : std::move(id);
    return out;
  }
  throw DataError("gen_sample: no scene with " + std::to_string(int(kMinForeground * 100)) + "-" +
                  std::to_string(int(kMaxForeground * 100)) + "% foreground after " +
                  std::to_string(kSceneAttempts) + " attempts (seed " + std::to_string(seed) + ")");
}

std::vector<Sample> gen_samples(const SceneConfig& config, std::size_t n, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%05zu", i);
    out.push_back(gen_sample(config, seed + i, id));
  }
  return out;
}

DatasetSplit gen_dataset(const SceneConfig& config, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("gen_dataset: need at least 2 samples (got " + std::to_string(n) + ")");
  std::vector<Sample> all = gen_samples(config, n, seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).split(0x5b117);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t n_test = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(0.25 * n)), 1, n - 1);
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  DatasetSplit split;
  for (auto i : train_idx) split.train.push_back(all[i]);
  for (auto i : test_idx) split.test.push_back(all[i]);
  return split;
}

std::vector<Sample> load_dataset_dir(const std::filesystem::path& dir, std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  struct Triple {
    fs::path rgb, depth, gt;
  };
  std::map<std::string, Triple> triples;
  const std::pair<const char*, fs::path Triple::*> suffixes[] = {
      {"_rgb.ppm", &Triple::rgb}, {"_depth.pgm", &Triple::depth}, {"_gt.pgm", &Triple::gt}};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    bool matched = false;
    for (const auto& [suffix, member] : suffixes) {
      const std::string sfx(suffix);
      if (name.size() > sfx.size() && name.ends_with(sfx)) {
        triples[name.substr(0, name.size() - sfx.size())].*member = entry.path();
        matched = true;
        break;
      }
    }
    if (!matched && warnings != nullptr) warnings->push_back("ignoring unrecognised file " + entry.path().string());
  }
  std::vector<Sample> out;
  for (const auto& [id, t] : triples) {
    if (t.rgb.empty()) throw DataError("sample '" + id + "' is missing " + id + "_rgb.ppm");
    if (t.depth.empty()) throw DataError("sample '" + id + "' is missing " + id + "_depth.pgm");
    if (t.gt.empty()) throw DataError("sample '" + id + "' is missing " + id + "_gt.pgm");
    const pnm::Image rgb = pnm::read(t.rgb);
    const pnm::Image depth = pnm::read(t.depth);
    const pnm::Image gt = pnm::read(t.gt);
    if (rgb.channels != 3) throw DataError(t.rgb.string() + ": expected a colour (P6) image");
    if (depth.channels != 1 || gt.channels != 1) throw DataError("sample '" + id + "': depth and gt must be P5");
    if (rgb.width != depth.width || rgb.height != depth.height || rgb.width != gt.width || rgb.height != gt.height) {
      throw DataError("sample '" + id + "': rgb, depth and gt sizes differ");
    }
    out.push_back({from_image(rgb, false), from_image(depth, false), from_image(gt, true), id});
  }
  return out;
}

void export_dataset_dir(std::span<const Sample> samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : samples) {
    pnm::write(dir / (s.id + "_rgb.ppm"), to_image(s.rgb));
    pnm::write(dir / (s.id + "_depth.pgm"), to_image(s.depth));
    pnm::write(dir / (s.id + "_gt.pgm"), to_image(s.gt));
  }
}

Sample preprocess(const Sample& sample, std::size_t target_size) {
  if (target_size == 0 || (target_size & (target_size - 1)) != 0) {
    throw ConfigError("preprocess: target size must be a power of two (got " + std::to_string(target_size) + ")");
  }
  for (const Tensorf* t : {&sample.rgb, &sample.depth, &sample.gt}) {
    if (!t->defined() || t->numel() == 0) throw DataError("preprocess: sample '" + sample.id + "' is empty");
  }
  return {resize_bilinear(sample.rgb, target_size), resize_bilinear(sample.depth, target_size),
          resize_nearest(sample.gt, target_size), sample.id};
}

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("make_batch: empty batch");
  const Shape& s = samples[indices[0]].rgb.shape();
  Batch b;
  b.rgb = Tensorf::zeros({indices.size(), 3, s.h, s.w});
  b.depth = Tensorf::zeros({indices.size(), 1, s.h, s.w});
  b.gt = Tensorf::zeros({indices.size(), 1, s.h, s.w});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample& x = samples[indices[k]];
    if (!(x.rgb.shape() == s)) throw ShapeError("make_batch: sample '" + x.id + "' has a different size");
    std::copy(x.rgb.data().begin(), x.rgb.data().end(), b.rgb.data().begin() + k * 3 * s.plane());
    std::copy(x.depth.data().begin(), x.depth.data().end(), b.depth.data().begin() + k * s.plane());
    std::copy(x.gt.data().begin(), x.gt.data().end(), b.gt.data().begin() + k * s.plane());
  }
  return b;
}

Tensorf rgbd_input(const Batch& batch) {
  const Tensorf parts[] = {batch.rgb, batch.depth};
  return ops::concat_channels<float>(std::span<const Tensorf>(parts));
}

}  // namespace pdnet
