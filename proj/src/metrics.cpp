#include "pdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pdnet/error.hpp"
#include "pdnet/kv_config.hpp"

namespace pdnet {
namespace {

void check_pair(const Tensorf& saliency, const Tensorf& mask) {
  if (!saliency.defined() || !mask.defined()) throw DataError("metrics: undefined prediction or mask");
  if (!(saliency.shape() == mask.shape())) {
    throw ShapeError("metrics: prediction " + saliency.shape().str() + " vs mask " + mask.shape().str());
  }
  if (saliency.numel() == 0) throw DataError("metrics: empty image");
  for (float v : mask.data()) {
    if (v != 0.0f && v != 1.0f) throw DataError("metrics: mask value " + std::to_string(v) + " is not 0 or 1");
  }
  for (float v : saliency.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("metrics: saliency value " + std::to_string(v) + " outside [0,1]");
  }
}

// Number of thresholds t in 0..255 with S*255 > t.
std::size_t positive_thresholds(float s) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(s) * 255.0));
}

void accumulate(const Tensorf& saliency, const Tensorf& mask, std::array<Confusion, kThresholds>& out) {
  std::array<std::uint64_t, kThresholds> pos{}, neg{};
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < saliency.numel(); ++i) {
    const std::size_t k = positive_thresholds(saliency.data()[i]);
    if (mask.data()[i] == 1.0f) {
      ++positives;
      if (k > 0) ++pos[k - 1];
    } else if (k > 0) {
      ++neg[k - 1];
    }
  }
  // A pixel counted at k-1 is positive for t = 0..k-1.
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t t = kThresholds; t-- > 0;) {
    tp += pos[t];
    fp += neg[t];
    out[t].tp += tp;
    out[t].fp += fp;
    out[t].fn += positives - tp;
  }
}

PrPoint to_point(const Confusion& c) {
  PrPoint p;
  p.precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  p.recall = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return p;
}

std::uint64_t positives(const Tensorf& mask) {
  std::uint64_t n = 0;
  for (float v : mask.data()) n += v == 1.0f;
  return n;
}

std::array<double, kThresholds> f_curve(const Tensorf& saliency, const Tensorf& mask, double beta2) {
  std::array<Confusion, kThresholds> counts{};
  accumulate(saliency, mask, counts);
  std::array<double, kThresholds> f{};
  for (std::size_t t = 0; t < kThresholds; ++t) {
    const PrPoint p = to_point(counts[t]);
    // An empty prediction scores zero rather than taking the 0/0 precision.
    f[t] = counts[t].tp == 0 ? 0.0 : f_beta(p.precision, p.recall, beta2);
  }
  return f;
}

void check_beta2(double beta2) {
  if (!std::isfinite(beta2) || beta2 <= 0.0) throw ConfigError("metrics: beta2 must be > 0");
}

void check_lists(std::span<const Tensorf> predictions, std::span<const Tensorf> masks) {
  if (predictions.size() != masks.size()) {
    throw ShapeError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(masks.size()) + " masks");
  }
  if (predictions.empty()) throw DataError("metrics: no samples");
}

}  // namespace

std::string_view to_string(FMode mode) { return mode == FMode::adaptive ? "adaptive" : "max-curve"; }

FMode parse_f_mode(std::string_view text) {
  if (text == "adaptive") return FMode::adaptive;
  if (text == "max-curve") return FMode::max_curve;
  throw ConfigError("unknown F-measure mode '" + std::string(text) + "' (expected adaptive or max-curve)");
}

double mae(const Tensorf& saliency, const Tensorf& mask) {
  check_pair(saliency, mask);
  double sum = 0.0;
  for (std::size_t i = 0; i < saliency.numel(); ++i) {
    sum += std::abs(static_cast<double>(saliency.data()[i]) - mask.data()[i]);
  }
  return sum / static_cast<double>(saliency.numel());
}

std::array<Confusion, kThresholds> confusion_curve(std::span<const Tensorf> predictions,
                                                   std::span<const Tensorf> masks) {
  check_lists(predictions, masks);
  std::array<Confusion, kThresholds> out{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_pair(predictions[i], masks[i]);
    accumulate(predictions[i], masks[i], out);
  }
  return out;
}

std::vector<PrPoint> pr_curve(std::span<const Tensorf> predictions, std::span<const Tensorf> masks) {
  const auto counts = confusion_curve(predictions, masks);
  if (counts[0].tp + counts[0].fn == 0) throw DataError("pr_curve: every mask is empty, recall is undefined");
  std::vector<PrPoint> out(kThresholds);
  for (std::size_t t = 0; t < kThresholds; ++t) out[t] = to_point(counts[t]);
  return out;
}

double f_beta(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

double f_measure_adaptive(const Tensorf& saliency, const Tensorf& mask, double beta2) {
  check_beta2(beta2);
  check_pair(saliency, mask);
  const std::uint64_t pos = positives(mask);
  if (pos == 0) throw DataError("f_measure: mask has no positive pixel");
  double mean = 0.0;
  for (float v : saliency.data()) mean += v;
  mean /= static_cast<double>(saliency.numel());
  const double threshold = std::min(2.0 * mean, 1.0);
  std::uint64_t tp = 0, predicted = 0;
  for (std::size_t i = 0; i < saliency.numel(); ++i) {
    if (saliency.data()[i] > threshold) {
      ++predicted;
      tp += mask.data()[i] == 1.0f;
    }
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
  const double recall = static_cast<double>(tp) / static_cast<double>(pos);
  return f_beta(precision, recall, beta2);
}

double f_measure_max(const Tensorf& saliency, const Tensorf& mask, double beta2) {
  check_beta2(beta2);
  check_pair(saliency, mask);
  if (positives(mask) == 0) throw DataError("f_measure: mask has no positive pixel");
  const auto f = f_curve(saliency, mask, beta2);
  return *std::max_element(f.begin(), f.end());
}

MetricsReport evaluate_predictions(std::span<const Tensorf> predictions, std::span<const Tensorf> masks,
                                   const MetricOptions& options) {
  check_beta2(options.beta2);
  MetricsReport report;
  report.pr_curve = pr_curve(predictions, masks);
  report.n_samples = predictions.size();
  const double n = static_cast<double>(predictions.size());
  std::array<double, kThresholds> mean_f{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    report.mae += mae(predictions[i], masks[i]);
    if (positives(masks[i]) == 0) throw DataError("evaluate: sample " + std::to_string(i) + " has an empty mask");
    if (options.f_mode == FMode::adaptive) {
      report.f_beta += f_measure_adaptive(predictions[i], masks[i], options.beta2);
    } else {
      const auto f = f_curve(predictions[i], masks[i], options.beta2);
      for (std::size_t t = 0; t < kThresholds; ++t) mean_f[t] += f[t];
    }
  }
  report.mae /= n;
  if (options.f_mode == FMode::adaptive) {
    report.f_beta /= n;
  } else {
    report.f_beta = *std::max_element(mean_f.begin(), mean_f.end()) / n;
  }
  return report;
}

MetricsReport evaluate_dataset(const std::function<Tensorf(const Sample&)>& predict, std::span<const Sample> samples,
                               const MetricOptions& options) {
  if (samples.empty()) throw DataError("evaluate: empty sample list");
  std::vector<Tensorf> predictions, masks;
  predictions.reserve(samples.size());
  masks.reserve(samples.size());
  for (const Sample& s : samples) {
    predictions.push_back(predict(s));
    masks.push_back(s.gt);
  }
  return evaluate_predictions(predictions, masks, options);
}

void write_metrics_csv(const MetricsReport& report, std::ostream& out) {
  out << "metric,value\n";
  out << "mae," << format_double(report.mae) << "\n";
  out << "fbeta," << format_double(report.f_beta) << "\n";
  out << "n_samples," << report.n_samples << "\n";
}

void write_pr_csv(const MetricsReport& report, std::ostream& out) {
  out << "threshold,precision,recall\n";
  for (std::size_t t = 0; t < report.pr_curve.size(); ++t) {
    out << t << "," << format_double(report.pr_curve[t].precision) << "," << format_double(report.pr_curve[t].recall)
        << "\n";
  }
}

}  // namespace pdnet
