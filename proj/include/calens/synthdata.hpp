#pragma once

#include <cstdint>
#include <vector>

#include "calens/types.hpp"

namespace calens {

// 1D two-Gaussian classification benchmark: class 0 samples from N(-1,1),
// class 1 from N(+1,1), labels drawn uniformly, so the per-sample foreground
// probability 1/(1+exp(-2x)) is known in closed form.
struct Gaussian1DDataset {
  std::vector<double> xs;
  std::vector<std::uint8_t> labels;
  std::uint64_t seed = 0;
};

// Desk-scale segmentation analogue: each image contains one axis-aligned
// random ellipse of foreground; pixel intensities are N(+1,1) inside and
// N(-1,1) outside. foreground_prior is the per-pixel probability of being
// covered by an ellipse under the sampling distribution (midpoint-rule
// quadrature over centers and radii), recorded for oracle use.
struct Blob2DDataset {
  SampleGrid grid;
  std::vector<std::vector<double>> images;
  std::vector<BinaryMask> ground_truth;
  std::vector<double> foreground_prior;
  std::uint64_t seed = 0;
};

// P(x in class 1) = p1(x) / (p0(x) + p1(x)) for the unit-variance Gaussians
// at -1 and +1; equals 1/(1+exp(-2x)).
double analytic_probability(double x);

// Posterior foreground probability for intensity t under a foreground prior.
double analytic_probability_with_prior(double t, double prior);

Gaussian1DDataset generate_gaussian1d(std::size_t n, std::uint64_t seed);

Blob2DDataset generate_blob2d(std::size_t num_images, const SampleGrid& grid, std::uint64_t seed);

}  // namespace calens
