#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "calens/types.hpp"

namespace calens {

// Kernel-smoothed reliability curve: at each eval point t, the foreground
// rate of ground truth among voxels whose heatmap value is near t, weighted
// with a triangular kernel of the given bandwidth. Points whose effective
// weight falls below the validity floor carry NaN and valid=false.
struct CalibrationCurve {
  std::vector<double> eval_points;
  std::vector<double> observed_fg_rate;
  std::vector<double> effective_weight;
  std::vector<bool> valid;
  double bandwidth = 0.0;
};

constexpr std::size_t kCurvePoints = 101;
// A point is valid when its kernel mass exceeds this fraction of the total
// voxel count.
constexpr double kCurveValidityFloor = 1e-3;

// Dice similarity of two binary masks on the [0,100] scale; 100 when both
// masks are empty.
double dsc(const BinaryMask& s, const BinaryMask& p);

// DSC with the ground truth replaced by a probability heatmap: the expected
// overlap of a prediction under the heatmap's per-voxel probabilities.
double estimated_dsc(const Heatmap& h, const BinaryMask& p);

CalibrationCurve calibration_curve(std::span<const Heatmap> heatmaps,
                                   std::span<const BinaryMask> gt, double bandwidth);
CalibrationCurve calibration_curve(const Heatmap& heatmap, const BinaryMask& gt, double bandwidth);

// Bin-weighted mean absolute gap between the heatmap and the observed
// foreground rate over equal-width bins.
double expected_calibration_error(const Heatmap& h, const BinaryMask& gt, std::size_t bins);
// Same with a soft reference (e.g. an analytically known probability map).
double expected_calibration_error(const Heatmap& h, const Heatmap& reference, std::size_t bins);

BinaryMask mask_union(std::span<const BinaryMask> masks);
BinaryMask mask_intersection(std::span<const BinaryMask> masks);

// Sensitivity of the union of the member masks against the ground truth;
// empty ground truth is undefined and reported as nullopt.
std::optional<double> union_sensitivity(std::span<const BinaryMask> masks, const BinaryMask& gt);
// Precision of the intersection of the member masks; empty intersection is
// undefined and reported as nullopt.
std::optional<double> intersection_precision(std::span<const BinaryMask> masks,
                                             const BinaryMask& gt);

// Two reliability curves over shared eval points: ground-truth foreground
// rate and predicted foreground rate, both conditioned on the heatmap value.
// Divergence of the prediction curve from the diagonal flags suboptimal
// predictions without needing labels.
struct PrevalenceConsistency {
  CalibrationCurve ground_truth;
  CalibrationCurve prediction;
};

PrevalenceConsistency prevalence_consistency(const Heatmap& h, const BinaryMask& pred,
                                             const BinaryMask& gt, double bandwidth);
PrevalenceConsistency prevalence_consistency(std::span<const Heatmap> h,
                                             std::span<const BinaryMask> pred,
                                             std::span<const BinaryMask> gt, double bandwidth);

// Linearly interpolated quartiles (NaN for empty inputs).
struct Quartiles {
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

Quartiles quartiles(std::vector<double> values);

// Heatmap probabilities at voxels where an annotation contradicts the ground
// truth; low fp / high fn probabilities are review candidates.
struct FlagReport {
  std::vector<double> fp_probabilities;
  std::vector<double> fn_probabilities;
  Quartiles fp_quartiles;
  Quartiles fn_quartiles;
};

FlagReport flag_disagreements(const Heatmap& h, const BinaryMask& annotation,
                              const BinaryMask& gt);
FlagReport flag_disagreements(std::span<const Heatmap> h, std::span<const BinaryMask> annotation,
                              std::span<const BinaryMask> gt);

}  // namespace calens
