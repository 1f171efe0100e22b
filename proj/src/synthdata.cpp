#include "calens/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "calens/errors.hpp"
#include "calens/rng.hpp"

namespace calens {

namespace {

// Substream ids under the dataset seed.
enum Stream : std::uint64_t {
  kLabels = 0,
  kFeatures = 1,
  kEllipse = 2,
  kIntensity = 3,
};

// Quadrature resolution for the ellipse-coverage prior.
constexpr int kCenterSteps = 64;
constexpr int kRadiusSteps = 32;

// Sorted values of ((coord - c) / r)^2 over the midpoint grid of centers and
// radii along one axis. The coverage probability at a pixel factorizes into a
// pair count over the two axes.
std::vector<double> axis_term_samples(double coord, double extent) {
  const double center_lo = extent / 4.0;
  const double center_hi = 3.0 * extent / 4.0;
  const double radius_lo = extent / 8.0;
  const double radius_hi = extent / 4.0;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(kCenterSteps) * kRadiusSteps);
  for (int ci = 0; ci < kCenterSteps; ++ci) {
    double c = center_lo + (center_hi - center_lo) * (ci + 0.5) / kCenterSteps;
    double d = coord - c;
    for (int ri = 0; ri < kRadiusSteps; ++ri) {
      double r = radius_lo + (radius_hi - radius_lo) * (ri + 0.5) / kRadiusSteps;
      double t = d / r;
      terms.push_back(t * t);
    }
  }
  std::sort(terms.begin(), terms.end());
  return terms;
}

std::vector<double> coverage_prior(const SampleGrid& grid) {
  const std::uint32_t height = grid.shape()[0];
  const std::uint32_t width = grid.shape()[1];
  std::vector<std::vector<double>> row_terms(height), col_terms(width);
  for (std::uint32_t y = 0; y < height; ++y) {
    row_terms[y] = axis_term_samples(y + 0.5, static_cast<double>(height));
  }
  for (std::uint32_t x = 0; x < width; ++x) {
    col_terms[x] = axis_term_samples(x + 0.5, static_cast<double>(width));
  }
  const double pairs =
      static_cast<double>(row_terms[0].size()) * static_cast<double>(col_terms[0].size());
  std::vector<double> prior(grid.voxel_count());
  for (std::uint32_t y = 0; y < height; ++y) {
    const auto& a = row_terms[y];
    for (std::uint32_t x = 0; x < width; ++x) {
      const auto& b = col_terms[x];
      // Count pairs with a[i] + b[j] <= 1 by sweeping a upward, b downward.
      std::uint64_t count = 0;
      std::size_t j = b.size();
      for (double ai : a) {
        while (j > 0 && ai + b[j - 1] > 1.0) --j;
        if (j == 0) break;
        count += j;
      }
      prior[static_cast<std::size_t>(y) * width + x] = static_cast<double>(count) / pairs;
    }
  }
  return prior;
}

}  // namespace

double analytic_probability(double x) { return 1.0 / (1.0 + std::exp(-2.0 * x)); }

double analytic_probability_with_prior(double t, double prior) {
  if (prior <= 0.0) return 0.0;
  if (prior >= 1.0) return 1.0;
  double odds = prior / (1.0 - prior) * std::exp(2.0 * t);
  return odds / (1.0 + odds);
}

Gaussian1DDataset generate_gaussian1d(std::size_t n, std::uint64_t seed) {
  if (n < 2) {
    throw InvalidCountError("gaussian1d needs at least 2 samples, got " + std::to_string(n));
  }
  CounterRng root(seed);
  CounterRng label_rng = root.derive(kLabels);
  CounterRng feature_rng = root.derive(kFeatures);
  Gaussian1DDataset ds;
  ds.seed = seed;
  ds.xs.resize(n);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t label = static_cast<std::uint8_t>(label_rng.next_u64() & 1u);
    double mean = label ? 1.0 : -1.0;
    ds.labels[i] = label;
    ds.xs[i] = mean + feature_rng.next_normal();
  }
  return ds;
}

Blob2DDataset generate_blob2d(std::size_t num_images, const SampleGrid& grid,
                              std::uint64_t seed) {
  if (grid.ndim() != 2) {
    throw InvalidGridError("blob2d requires a 2D grid");
  }
  for (std::uint32_t extent : grid.shape()) {
    if (extent < 8) {
      throw InvalidGridError("blob2d grid extents must be at least 8");
    }
  }
  if (num_images == 0) {
    throw InvalidCountError("blob2d needs at least one image");
  }

  const std::uint32_t height = grid.shape()[0];
  const std::uint32_t width = grid.shape()[1];
  CounterRng root(seed);

  Blob2DDataset ds{grid, {}, {}, coverage_prior(grid), seed};
  ds.images.reserve(num_images);
  ds.ground_truth.reserve(num_images);

  for (std::size_t img = 0; img < num_images; ++img) {
    CounterRng ellipse_rng = root.derive(kEllipse).derive(img);
    CounterRng intensity_rng = root.derive(kIntensity).derive(img);
    double cy = ellipse_rng.next_uniform(height / 4.0, 3.0 * height / 4.0);
    double cx = ellipse_rng.next_uniform(width / 4.0, 3.0 * width / 4.0);
    double ry = ellipse_rng.next_uniform(height / 8.0, height / 4.0);
    double rx = ellipse_rng.next_uniform(width / 8.0, width / 4.0);

    std::vector<std::uint8_t> mask(grid.voxel_count());
    std::vector<double> image(grid.voxel_count());
    for (std::uint32_t y = 0; y < height; ++y) {
      for (std::uint32_t x = 0; x < width; ++x) {
        double dy = (y + 0.5 - cy) / ry;
        double dx = (x + 0.5 - cx) / rx;
        bool inside = dy * dy + dx * dx <= 1.0;
        std::size_t i = static_cast<std::size_t>(y) * width + x;
        mask[i] = inside ? 1 : 0;
        image[i] = (inside ? 1.0 : -1.0) + intensity_rng.next_normal();
      }
    }
    ds.ground_truth.emplace_back(grid, std::move(mask));
    ds.images.push_back(std::move(image));
  }
  return ds;
}

}  // namespace calens
