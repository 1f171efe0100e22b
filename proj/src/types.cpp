#include "calens/types.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "calens/errors.hpp"

namespace calens {

SampleGrid::SampleGrid(std::vector<std::uint32_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw InvalidGridError("grid must have 1 to 3 dimensions, got " +
                           std::to_string(shape_.size()));
  }
  voxel_count_ = 1;
  for (std::uint32_t extent : shape_) {
    if (extent == 0) {
      throw InvalidGridError("grid extents must be positive");
    }
    voxel_count_ *= extent;
  }
}

BinaryMask::BinaryMask(SampleGrid grid, std::vector<std::uint8_t> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.voxel_count()) {
    throw LengthMismatchError("mask has " + std::to_string(values_.size()) +
                              " values for " + std::to_string(grid_.voxel_count()) + " voxels");
  }
  for (std::uint8_t v : values_) {
    if (v > 1) {
      throw InvalidArgumentError("mask values must be 0 or 1");
    }
  }
}

BinaryMask BinaryMask::zeros(SampleGrid grid) {
  std::vector<std::uint8_t> values(grid.voxel_count(), 0);
  return BinaryMask(std::move(grid), std::move(values));
}

std::size_t BinaryMask::foreground_count() const {
  std::size_t count = 0;
  for (std::uint8_t v : values_) count += v;
  return count;
}

Heatmap::Heatmap(SampleGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.voxel_count()) {
    throw LengthMismatchError("heatmap has " + std::to_string(values_.size()) +
                              " values for " + std::to_string(grid_.voxel_count()) + " voxels");
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgumentError("heatmap values must lie in [0,1]");
    }
  }
}

OneHotLabel::OneHotLabel(SampleGrid grid, std::size_t num_classes,
                         std::vector<std::uint8_t> values)
    : grid_(std::move(grid)), num_classes_(num_classes), values_(std::move(values)) {
  if (num_classes_ < 2) {
    throw InvalidArgumentError("one-hot label needs a background and at least one foreground class");
  }
  if (values_.size() != grid_.voxel_count() * num_classes_) {
    throw LengthMismatchError("one-hot label has wrong value count");
  }
  for (std::size_t i = 0; i < grid_.voxel_count(); ++i) {
    unsigned sum = 0;
    for (std::size_t c = 0; c < num_classes_; ++c) {
      std::uint8_t v = values_[i * num_classes_ + c];
      if (v > 1) {
        throw InvalidArgumentError("one-hot entries must be 0 or 1");
      }
      sum += v;
    }
    if (sum != 1) {
      throw InvalidArgumentError("each voxel's one-hot vector must sum to exactly 1");
    }
  }
}

SoftPrediction::SoftPrediction(SampleGrid grid, std::size_t num_classes,
                               std::vector<double> values)
    : grid_(std::move(grid)), num_classes_(num_classes), values_(std::move(values)) {
  if (num_classes_ < 2) {
    throw InvalidArgumentError("soft prediction needs a background and at least one foreground class");
  }
  if (values_.size() != grid_.voxel_count() * num_classes_) {
    throw LengthMismatchError("soft prediction has wrong value count");
  }
  for (std::size_t i = 0; i < grid_.voxel_count(); ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes_; ++c) {
      double v = values_[i * num_classes_ + c];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgumentError("soft prediction entries must lie in [0,1]");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InvalidArgumentError("each voxel's probability vector must sum to 1 within 1e-6");
    }
  }
}

void validate_same_grid(const SampleGrid& a, const SampleGrid& b) {
  if (a != b) {
    throw GridMismatchError("sample grids differ");
  }
}

void validate_pair(const BinaryMask& mask, const BinaryMask& other) {
  validate_same_grid(mask.grid(), other.grid());
}

void validate_pair(const BinaryMask& mask, const Heatmap& other) {
  validate_same_grid(mask.grid(), other.grid());
}

Heatmap heatmap_from_mask(const BinaryMask& mask) {
  std::vector<double> values(mask.values().begin(), mask.values().end());
  return Heatmap(mask.grid(), std::move(values));
}

BinaryMask mask_from_heatmap(const Heatmap& heatmap) {
  std::vector<std::uint8_t> values;
  values.reserve(heatmap.values().size());
  for (double v : heatmap.values()) {
    if (v != 0.0 && v != 1.0) {
      throw InvalidArgumentError("heatmap is not binary; cannot convert to mask");
    }
    values.push_back(v == 1.0 ? 1 : 0);
  }
  return BinaryMask(heatmap.grid(), std::move(values));
}

OneHotLabel onehot_from_mask(const BinaryMask& mask) {
  std::vector<std::uint8_t> values(mask.values().size() * 2);
  for (std::size_t i = 0; i < mask.values().size(); ++i) {
    values[i * 2] = static_cast<std::uint8_t>(1 - mask.values()[i]);
    values[i * 2 + 1] = mask.values()[i];
  }
  return OneHotLabel(mask.grid(), 2, std::move(values));
}

BinaryMask mask_from_onehot(const OneHotLabel& label) {
  if (label.num_classes() != 2) {
    throw ClassCountMismatchError("mask conversion requires exactly one foreground class");
  }
  std::vector<std::uint8_t> values(label.grid().voxel_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = label.at(i, 1);
  }
  return BinaryMask(label.grid(), std::move(values));
}

SoftPrediction binary_soft_prediction(SampleGrid grid, std::vector<double> foreground) {
  if (foreground.size() != grid.voxel_count()) {
    throw LengthMismatchError("foreground probabilities do not match the grid");
  }
  std::vector<double> values(foreground.size() * 2);
  for (std::size_t i = 0; i < foreground.size(); ++i) {
    values[i * 2] = 1.0 - foreground[i];
    values[i * 2 + 1] = foreground[i];
  }
  return SoftPrediction(std::move(grid), 2, std::move(values));
}

}  // namespace calens
