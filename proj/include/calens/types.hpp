#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace calens {

// Row-major voxel grid with 1 to 3 dimensions. All voxel arrays in the
// toolkit are flat arrays indexed identically over one of these.
class SampleGrid {
 public:
  explicit SampleGrid(std::vector<std::uint32_t> shape);

  const std::vector<std::uint32_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t voxel_count() const { return voxel_count_; }

  bool operator==(const SampleGrid& other) const { return shape_ == other.shape_; }
  bool operator!=(const SampleGrid& other) const { return !(*this == other); }

 private:
  std::vector<std::uint32_t> shape_;
  std::size_t voxel_count_;
};

// Per-voxel {0,1} labels. Immutable after construction.
class BinaryMask {
 public:
  BinaryMask(SampleGrid grid, std::vector<std::uint8_t> values);

  static BinaryMask zeros(SampleGrid grid);

  const SampleGrid& grid() const { return grid_; }
  std::span<const std::uint8_t> values() const { return values_; }
  std::size_t foreground_count() const;

  bool operator==(const BinaryMask& other) const {
    return grid_ == other.grid_ && values_ == other.values_;
  }

 private:
  SampleGrid grid_;
  std::vector<std::uint8_t> values_;
};

// Per-voxel probabilities in [0,1]; the output of heatmap composition or
// pixel-wise averaging of binary masks.
class Heatmap {
 public:
  Heatmap(SampleGrid grid, std::vector<double> values);

  const SampleGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }

 private:
  SampleGrid grid_;
  std::vector<double> values_;
};

// One-hot ground truth with a background class 0 and C foreground classes.
// Values are voxel-major: values[i * num_classes + c].
class OneHotLabel {
 public:
  OneHotLabel(SampleGrid grid, std::size_t num_classes, std::vector<std::uint8_t> values);

  const SampleGrid& grid() const { return grid_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_foreground_classes() const { return num_classes_ - 1; }
  std::span<const std::uint8_t> values() const { return values_; }
  std::uint8_t at(std::size_t voxel, std::size_t cls) const {
    return values_[voxel * num_classes_ + cls];
  }

 private:
  SampleGrid grid_;
  std::size_t num_classes_;
  std::vector<std::uint8_t> values_;
};

// Per-voxel probability vectors (softmax output). Same layout as OneHotLabel;
// each voxel's vector must sum to 1 within 1e-6.
class SoftPrediction {
 public:
  SoftPrediction(SampleGrid grid, std::size_t num_classes, std::vector<double> values);

  const SampleGrid& grid() const { return grid_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_foreground_classes() const { return num_classes_ - 1; }
  std::span<const double> values() const { return values_; }
  double at(std::size_t voxel, std::size_t cls) const {
    return values_[voxel * num_classes_ + cls];
  }

 private:
  SampleGrid grid_;
  std::size_t num_classes_;
  std::vector<double> values_;
};

// Succeeds iff the grids match, otherwise throws GridMismatchError.
void validate_pair(const BinaryMask& mask, const BinaryMask& other);
void validate_pair(const BinaryMask& mask, const Heatmap& other);
void validate_same_grid(const SampleGrid& a, const SampleGrid& b);

// Lossless conversions between the voxel types.
Heatmap heatmap_from_mask(const BinaryMask& mask);
// Requires every heatmap value to be exactly 0 or 1.
BinaryMask mask_from_heatmap(const Heatmap& heatmap);
// C=1 one-hot encoding: class 1 is the mask, class 0 its complement.
OneHotLabel onehot_from_mask(const BinaryMask& mask);
// Inverse of onehot_from_mask; requires num_classes == 2.
BinaryMask mask_from_onehot(const OneHotLabel& label);
// Two-class soft prediction from foreground probabilities.
SoftPrediction binary_soft_prediction(SampleGrid grid, std::vector<double> foreground);

}  // namespace calens
