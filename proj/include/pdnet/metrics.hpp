#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "pdnet/data.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

inline constexpr std::size_t kThresholds = 256;

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

struct PrPoint {
  double precision = 1.0;
  double recall = 0.0;
};

enum class FMode { adaptive, max_curve };

std::string_view to_string(FMode mode);
FMode parse_f_mode(std::string_view text);

struct MetricOptions {
  double beta2 = 0.3;
  FMode f_mode = FMode::adaptive;
};

/// Each prediction/mask pair is one image of any shape; shapes must agree
/// pairwise. Masks must be exactly 0/1 and predictions lie in [0,1].
double mae(const Tensorf& saliency, const Tensorf& mask);

/// Pixel counts at thresholds t = 0..255, positive iff S*255 > t, summed
/// over all pairs.
std::array<Confusion, kThresholds> confusion_curve(std::span<const Tensorf> predictions,
                                                   std::span<const Tensorf> masks);

/// Micro-averaged curve. Precision 0/0 is 1. Throws DataError if no mask
/// has a positive pixel.
std::vector<PrPoint> pr_curve(std::span<const Tensorf> predictions, std::span<const Tensorf> masks);

/// Zero when precision and recall are both zero.
double f_beta(double precision, double recall, double beta2);

/// Binarises at min(2 * mean(S), 1) with a strict comparison.
double f_measure_adaptive(const Tensorf& saliency, const Tensorf& mask, double beta2 = 0.3);

/// Largest F over the 256 thresholds of the image's own curve.
double f_measure_max(const Tensorf& saliency, const Tensorf& mask, double beta2 = 0.3);

struct MetricsReport {
  double mae = 0.0;
  double f_beta = 0.0;
  std::vector<PrPoint> pr_curve;
  std::size_t n_samples = 0;
};

/// mae and f_beta are per-image means; the curve is micro-averaged.
MetricsReport evaluate_predictions(std::span<const Tensorf> predictions, std::span<const Tensorf> masks,
                                   const MetricOptions& options = {});

/// `predict` maps one sample to its [1,1,H,W] saliency map.
MetricsReport evaluate_dataset(const std::function<Tensorf(const Sample&)>& predict, std::span<const Sample> samples,
                               const MetricOptions& options = {});

/// `metric,value` rows: mae, fbeta, n_samples.
void write_metrics_csv(const MetricsReport& report, std::ostream& out);
/// `threshold,precision,recall`, 256 rows.
void write_pr_csv(const MetricsReport& report, std::ostream& out);

}  // namespace pdnet
