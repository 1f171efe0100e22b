#include "calens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calens/errors.hpp"

namespace calens {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double triangular_kernel(double u) {
  double a = std::abs(u);
  return a >= 1.0 ? 0.0 : 1.0 - a;
}

void check_curve_inputs(std::span<const Heatmap> heatmaps, std::span<const BinaryMask> gt,
                        double bandwidth) {
  if (heatmaps.size() != gt.size() || heatmaps.empty()) {
    throw LengthMismatchError("need one ground-truth mask per heatmap");
  }
  if (!(bandwidth > 0.0 && bandwidth <= 0.5)) {
    throw InvalidBandwidthError("bandwidth must lie in (0, 0.5]");
  }
  for (std::size_t img = 0; img < heatmaps.size(); ++img) {
    validate_pair(gt[img], heatmaps[img]);
  }
}

// Shared kernel regression: numerators may come from ground truth or from a
// predicted mask.
CalibrationCurve kernel_curve(std::span<const Heatmap> heatmaps,
                              std::span<const BinaryMask> numerator_masks, double bandwidth) {
  CalibrationCurve curve;
  curve.bandwidth = bandwidth;
  curve.eval_points.resize(kCurvePoints);
  curve.observed_fg_rate.assign(kCurvePoints, kNan);
  curve.effective_weight.assign(kCurvePoints, 0.0);
  curve.valid.assign(kCurvePoints, false);

  std::vector<double> weighted_positive(kCurvePoints, 0.0);
  std::size_t total_voxels = 0;
  for (std::size_t t = 0; t < kCurvePoints; ++t) {
    curve.eval_points[t] = static_cast<double>(t) / (kCurvePoints - 1);
  }
  for (std::size_t img = 0; img < heatmaps.size(); ++img) {
    std::span<const double> h = heatmaps[img].values();
    std::span<const std::uint8_t> g = numerator_masks[img].values();
    total_voxels += h.size();
    for (std::size_t i = 0; i < h.size(); ++i) {
      // Only eval points within one bandwidth of h_i receive weight.
      double lo = (h[i] - bandwidth) * (kCurvePoints - 1);
      double hi = (h[i] + bandwidth) * (kCurvePoints - 1);
      std::size_t t_lo = lo <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(lo));
      std::size_t t_hi = hi >= kCurvePoints - 1 ? kCurvePoints - 1
                                                : static_cast<std::size_t>(std::floor(hi));
      for (std::size_t t = t_lo; t <= t_hi && t < kCurvePoints; ++t) {
        double k = triangular_kernel((h[i] - curve.eval_points[t]) / bandwidth);
        curve.effective_weight[t] += k;
        if (g[i]) weighted_positive[t] += k;
      }
    }
  }
  const double floor = kCurveValidityFloor * static_cast<double>(total_voxels);
  for (std::size_t t = 0; t < kCurvePoints; ++t) {
    if (curve.effective_weight[t] >= floor && curve.effective_weight[t] > 0.0) {
      curve.valid[t] = true;
      curve.observed_fg_rate[t] = weighted_positive[t] / curve.effective_weight[t];
    }
  }
  return curve;
}

}  // namespace

double dsc(const BinaryMask& s, const BinaryMask& p) {
  validate_pair(s, p);
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.values().size(); ++i) {
    std::uint8_t si = s.values()[i];
    std::uint8_t pi = p.values()[i];
    tp += si & pi;
    fp += static_cast<std::uint64_t>(pi) & (1u - si);
    fn += static_cast<std::uint64_t>(si) & (1u - pi);
  }
  std::uint64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 100.0;  // both masks empty: perfect agreement
  return 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double estimated_dsc(const Heatmap& h, const BinaryMask& p) {
  validate_pair(p, h);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < p.values().size(); ++i) {
    double hi = h.values()[i];
    double pi = p.values()[i];
    tp += hi * pi;
    fp += (1.0 - hi) * pi;
    fn += hi * (1.0 - pi);
  }
  double denom = 2.0 * tp + fp + fn;
  if (denom == 0.0) return 100.0;
  return 100.0 * 2.0 * tp / denom;
}

CalibrationCurve calibration_curve(std::span<const Heatmap> heatmaps,
                                   std::span<const BinaryMask> gt, double bandwidth) {
  check_curve_inputs(heatmaps, gt, bandwidth);
  return kernel_curve(heatmaps, gt, bandwidth);
}

CalibrationCurve calibration_curve(const Heatmap& heatmap, const BinaryMask& gt,
                                   double bandwidth) {
  return calibration_curve(std::span<const Heatmap>(&heatmap, 1),
                           std::span<const BinaryMask>(&gt, 1), bandwidth);
}

double expected_calibration_error(const Heatmap& h, const Heatmap& reference, std::size_t bins) {
  validate_same_grid(h.grid(), reference.grid());
  if (bins < 2) {
    throw InvalidArgumentError("need at least 2 bins");
  }
  std::vector<double> sum_h(bins, 0.0), sum_ref(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  const std::size_t voxels = h.values().size();
  for (std::size_t i = 0; i < voxels; ++i) {
    std::size_t b = std::min(bins - 1, static_cast<std::size_t>(h.values()[i] * bins));
    sum_h[b] += h.values()[i];
    sum_ref[b] += reference.values()[i];
    ++count[b];
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    double gap = std::abs(sum_h[b] / count[b] - sum_ref[b] / count[b]);
    ece += gap * static_cast<double>(count[b]) / static_cast<double>(voxels);
  }
  return ece;
}

double expected_calibration_error(const Heatmap& h, const BinaryMask& gt, std::size_t bins) {
  return expected_calibration_error(h, heatmap_from_mask(gt), bins);
}

BinaryMask mask_union(std::span<const BinaryMask> masks) {
  if (masks.empty()) {
    throw InvalidArgumentError("union of an empty mask list");
  }
  std::vector<std::uint8_t> values(masks[0].values().begin(), masks[0].values().end());
  for (std::size_t k = 1; k < masks.size(); ++k) {
    validate_pair(masks[0], masks[k]);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] |= masks[k].values()[i];
  }
  return BinaryMask(masks[0].grid(), std::move(values));
}

BinaryMask mask_intersection(std::span<const BinaryMask> masks) {
  if (masks.empty()) {
    throw InvalidArgumentError("intersection of an empty mask list");
  }
  std::vector<std::uint8_t> values(masks[0].values().begin(), masks[0].values().end());
  for (std::size_t k = 1; k < masks.size(); ++k) {
    validate_pair(masks[0], masks[k]);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] &= masks[k].values()[i];
  }
  return BinaryMask(masks[0].grid(), std::move(values));
}

std::optional<double> union_sensitivity(std::span<const BinaryMask> masks, const BinaryMask& gt) {
  BinaryMask u = mask_union(masks);
  validate_pair(u, gt);
  std::uint64_t gt_count = 0, hit = 0;
  for (std::size_t i = 0; i < gt.values().size(); ++i) {
    if (gt.values()[i]) {
      ++gt_count;
      hit += u.values()[i];
    }
  }
  if (gt_count == 0) return std::nullopt;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(gt_count);
}

std::optional<double> intersection_precision(std::span<const BinaryMask> masks,
                                             const BinaryMask& gt) {
  BinaryMask inter = mask_intersection(masks);
  validate_pair(inter, gt);
  std::uint64_t inter_count = 0, hit = 0;
  for (std::size_t i = 0; i < gt.values().size(); ++i) {
    if (inter.values()[i]) {
      ++inter_count;
      hit += gt.values()[i];
    }
  }
  if (inter_count == 0) return std::nullopt;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(inter_count);
}

PrevalenceConsistency prevalence_consistency(std::span<const Heatmap> h,
                                             std::span<const BinaryMask> pred,
                                             std::span<const BinaryMask> gt, double bandwidth) {
  check_curve_inputs(h, gt, bandwidth);
  if (pred.size() != h.size()) {
    throw LengthMismatchError("need one prediction per heatmap");
  }
  for (std::size_t img = 0; img < h.size(); ++img) {
    validate_pair(pred[img], h[img]);
  }
  return PrevalenceConsistency{kernel_curve(h, gt, bandwidth), kernel_curve(h, pred, bandwidth)};
}

PrevalenceConsistency prevalence_consistency(const Heatmap& h, const BinaryMask& pred,
                                             const BinaryMask& gt, double bandwidth) {
  return prevalence_consistency(std::span<const Heatmap>(&h, 1),
                                std::span<const BinaryMask>(&pred, 1),
                                std::span<const BinaryMask>(&gt, 1), bandwidth);
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) {
    return Quartiles{kNan, kNan, kNan};
  }
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    double pos = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  return Quartiles{at(0.25), at(0.5), at(0.75)};
}

FlagReport flag_disagreements(std::span<const Heatmap> h, std::span<const BinaryMask> annotation,
                              std::span<const BinaryMask> gt) {
  if (h.size() != annotation.size() || h.size() != gt.size() || h.empty()) {
    throw LengthMismatchError("need matching heatmap, annotation and ground-truth lists");
  }
  FlagReport report;
  for (std::size_t img = 0; img < h.size(); ++img) {
    validate_pair(annotation[img], h[img]);
    validate_pair(annotation[img], gt[img]);
    for (std::size_t i = 0; i < h[img].values().size(); ++i) {
      std::uint8_t a = annotation[img].values()[i];
      std::uint8_t g = gt[img].values()[i];
      if (a == 1 && g == 0) {
        report.fp_probabilities.push_back(h[img].values()[i]);
      } else if (a == 0 && g == 1) {
        report.fn_probabilities.push_back(h[img].values()[i]);
      }
    }
  }
  report.fp_quartiles = quartiles(report.fp_probabilities);
  report.fn_quartiles = quartiles(report.fn_probabilities);
  return report;
}

FlagReport flag_disagreements(const Heatmap& h, const BinaryMask& annotation,
                              const BinaryMask& gt) {
  return flag_disagreements(std::span<const Heatmap>(&h, 1),
                            std::span<const BinaryMask>(&annotation, 1),
                            std::span<const BinaryMask>(&gt, 1));
}

}  // namespace calens
