#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "calens/types.hpp"

namespace calens {

// Hard ceiling on ensemble size; keeps the 2^n pattern space enumerable.
constexpr std::size_t kMaxEnsembleModels = 20;

struct PatternCounts {
  std::uint64_t voxel_count = 0;
  std::uint64_t foreground_count = 0;
};

// For each observed binary response pattern of the n models (bit k is model
// k's decision), the number of voxels showing that pattern and how many of
// them are ground-truth foreground. Patterns never observed are absent.
class PatternHistogram {
 public:
  explicit PatternHistogram(std::size_t n_models);

  std::size_t n_models() const { return n_models_; }
  const std::map<std::uint32_t, PatternCounts>& entries() const { return entries_; }

  void add(std::uint32_t pattern, std::uint64_t voxels, std::uint64_t foreground);
  void merge(const PatternHistogram& other);
  std::uint64_t total_voxels() const;

 private:
  std::size_t n_models_;
  std::map<std::uint32_t, PatternCounts> entries_;
};

// Exact pattern/foreground counts for one image (all masks plus ground truth
// share a grid) or for a set of images (histograms are additive).
PatternHistogram count_patterns(std::span<const BinaryMask> masks, const BinaryMask& gt);
PatternHistogram count_patterns(std::span<const std::vector<BinaryMask>> masks_per_image,
                                std::span<const BinaryMask> gt_per_image);

enum class RowWeighting {
  counts,  // weight each pattern row by its voxel count (default)
  equal,   // weight every observed pattern row equally
};

struct SolveOptions {
  RowWeighting weighting = RowWeighting::counts;
  bool nonnegative = false;
};

struct CalibrationCoefficients {
  std::vector<double> a;
  // Weighted RMS of (a.b - foreground_rate(b)) over the rows of the system.
  double residual_norm = 0.0;
  // Rows excluded from the system (the all-zero pattern when observed).
  std::vector<std::uint32_t> dropped_patterns;
  // Foreground rate of voxels where no model fired: irreducible false
  // negatives no linear combination can recover.
  double zero_pattern_fg_rate = 0.0;
  std::uint64_t zero_pattern_voxels = 0;
  // Normal matrix was rank deficient; minimum-norm solution returned.
  bool degenerate = false;
  SolveOptions options;
};

// Least-squares fit of the coefficients a so that a.b matches the foreground
// rate of every observed nonzero pattern b, weighted per SolveOptions.
// Requires at least one nonzero pattern with voxel_count > 0.
CalibrationCoefficients solve_coefficients(const PatternHistogram& histogram,
                                           const SolveOptions& options = {});

struct ComposedHeatmap {
  Heatmap heatmap;
  // Voxels whose weighted sum fell outside [0,1] before clipping.
  std::size_t clipped_low = 0;
  std::size_t clipped_high = 0;
};

// Per-voxel weighted sum of the member masks, clipped to [0,1].
ComposedHeatmap compose_heatmap(std::span<const BinaryMask> masks,
                                std::span<const double> coefficients);
ComposedHeatmap compose_heatmap(std::span<const BinaryMask> masks,
                                const CalibrationCoefficients& coefficients);

// Pixel-wise arithmetic mean of the masks (the uncalibrated / dropout
// combination rule).
Heatmap mean_heatmap(std::span<const BinaryMask> masks);

}  // namespace calens
