#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdnet/kv_config.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

/// One RGB-D image. Depth convention: larger values are closer.
struct Sample {
  Tensorf rgb;    // [1,3,H,W] in [0,1]
  Tensorf depth;  // [1,1,H,W] in [0,1]
  Tensorf gt;     // [1,1,H,W], exactly 0 or 1
  std::string id;
};

enum class ShapeKind { circle, rectangle, triangle };
enum class Background { flat, gradient, checker };

struct SceneConfig {
  std::size_t size = 64;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
  std::vector<ShapeKind> kinds{ShapeKind::circle, ShapeKind::rectangle, ShapeKind::triangle};
  /// 0: salient objects take the background colour; 1: strongly separated.
  double color_contrast = 0.6;
  /// Gap between the nearest background pixel and the farthest object pixel.
  double depth_contrast = 0.6;
  double noise_std = 0.02;
  Background background = Background::flat;
  /// Non-salient shapes drawn in RGB only, at background depth.
  std::size_t distractors = 0;
  double distractor_contrast = 0.6;

  void validate() const;

  /// Low colour contrast, high depth contrast, textured background and
  /// RGB-only distractors: the regime where depth carries the signal.
  static SceneConfig rgb_ambiguous();
};

std::string_view to_string(ShapeKind kind);
std::string_view to_string(Background background);

/// Reads `scene.*` keys; unknown `scene.*` keys are errors.
void apply_scene_keys(const KeyValues& kv, SceneConfig& config);
void write_scene_keys(const SceneConfig& config, KeyValues& kv);

/// Fully determined by (config, seed). Throws DataError when no scene with
/// 5-40% foreground is found in 100 attempts.
Sample gen_sample(const SceneConfig& config, std::uint64_t seed, std::string id = {});

/// n samples with seeds seed, seed+1, ...; ids are "s00000", "s00001", ...
std::vector<Sample> gen_samples(const SceneConfig& config, std::size_t n, std::uint64_t seed);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// gen_samples followed by a seeded 75/25 shuffle split.
DatasetSplit gen_dataset(const SceneConfig& config, std::size_t n, std::uint64_t seed);

/// Reads <id>_rgb.ppm, <id>_depth.pgm, <id>_gt.pgm triples, sorted by id.
/// Unrelated files are skipped and reported through `warnings` if given.
std::vector<Sample> load_dataset_dir(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);

/// Writes samples in the layout load_dataset_dir reads. Creates `dir`.
void export_dataset_dir(std::span<const Sample> samples, const std::filesystem::path& dir);

/// Bilinear resize of rgb and depth, nearest-neighbour resize of gt.
Sample preprocess(const Sample& sample, std::size_t target_size);

/// Samples stacked along the batch axis.
struct Batch {
  Tensorf rgb;    // [B,3,H,W]
  Tensorf depth;  // [B,1,H,W]
  Tensorf gt;     // [B,1,H,W]
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

/// rgb and depth concatenated into a 4-channel image.
Tensorf rgbd_input(const Batch& batch);

}  // namespace pdnet
