#include <doctest.h>

#include <cmath>
#include <vector>

#include "calens/errors.hpp"
#include "calens/io.hpp"
#include "calens/rng.hpp"
#include "calens/synthdata.hpp"

#include "oracles.hpp"

using namespace calens;
using doctest::Approx;

TEST_CASE("analytic probability closed form") {
  CHECK(analytic_probability(0.0) == Approx(0.5).epsilon(1e-12));
  CHECK(analytic_probability(1.0) == Approx(0.880797).epsilon(1e-6));
  CHECK(analytic_probability(-3.0) == Approx(0.002473).epsilon(1e-3));
}

TEST_CASE("analytic probability matches the density-ratio oracle") {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    CHECK(analytic_probability(x) == Approx(oracles::density_ratio_probability(x)).epsilon(1e-12));
  }
}

TEST_CASE("analytic probability is monotone and symmetric") {
  CounterRng rng(5);
  for (int round = 0; round < 200; ++round) {
    double x = rng.next_uniform(-5.0, 5.0);
    double delta = rng.next_uniform(1e-6, 1.0);
    CHECK(analytic_probability(x + delta) > analytic_probability(x));
    CHECK(analytic_probability(-x) == Approx(1.0 - analytic_probability(x)).epsilon(1e-12));
  }
}

TEST_CASE("gaussian1d class balance and determinism") {
  Gaussian1DDataset ds = generate_gaussian1d(10000, 7);
  std::size_t positives = 0;
  for (std::uint8_t label : ds.labels) positives += label;
  double fraction = static_cast<double>(positives) / 10000.0;
  CHECK(fraction >= 0.48);
  CHECK(fraction <= 0.52);

  Gaussian1DDataset tiny = generate_gaussian1d(2, 0);
  CHECK(tiny.xs.size() == 2);
  CHECK(tiny.labels.size() == 2);

  Gaussian1DDataset again = generate_gaussian1d(10000, 7);
  CHECK(again.xs == ds.xs);
  CHECK(again.labels == ds.labels);

  CHECK_THROWS_AS(generate_gaussian1d(1, 0), InvalidCountError);
}

TEST_CASE("gaussian1d bin frequencies track the analytic probability") {
  const std::size_t n = 200000;
  Gaussian1DDataset ds = generate_gaussian1d(n, 11);
  const double lo = -2.0, hi = 2.0, width = 0.25;
  std::size_t bins = static_cast<std::size_t>((hi - lo) / width);
  std::vector<std::size_t> count(bins, 0), positive(bins, 0);
  std::vector<double> prob_sum(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = ds.xs[i];
    if (x < lo || x >= hi) continue;
    std::size_t b = static_cast<std::size_t>((x - lo) / width);
    ++count[b];
    positive[b] += ds.labels[i];
    prob_sum[b] += analytic_probability(x);
  }
  for (std::size_t b = 0; b < bins; ++b) {
    REQUIRE(count[b] > 500);
    double observed = static_cast<double>(positive[b]) / static_cast<double>(count[b]);
    double expected = prob_sum[b] / static_cast<double>(count[b]);
    // Binomial error: 4 standard deviations.
    double tolerance = 4.0 / std::sqrt(static_cast<double>(count[b]));
    CHECK(std::abs(observed - expected) < tolerance);
  }
}

TEST_CASE("blob2d shapes, determinism and foreground fractions") {
  SampleGrid grid({32, 32});
  Blob2DDataset one = generate_blob2d(1, grid, 0);
  CHECK(one.images.size() == 1);
  double fraction = static_cast<double>(one.ground_truth[0].foreground_count()) /
                    static_cast<double>(grid.voxel_count());
  CHECK(fraction > 0.0);
  CHECK(fraction < 1.0);

  Blob2DDataset again = generate_blob2d(1, grid, 0);
  CHECK(again.images == one.images);
  CHECK(again.ground_truth[0] == one.ground_truth[0]);

  Blob2DDataset many = generate_blob2d(100, grid, 1);
  double mean_fraction = 0.0;
  for (const BinaryMask& gt : many.ground_truth) {
    mean_fraction += static_cast<double>(gt.foreground_count()) /
                     static_cast<double>(grid.voxel_count());
  }
  mean_fraction /= 100.0;
  CHECK(mean_fraction >= 0.05);
  CHECK(mean_fraction <= 0.5);

  CHECK_THROWS_AS(generate_blob2d(1, SampleGrid({32}), 0), InvalidGridError);
  CHECK_THROWS_AS(generate_blob2d(1, SampleGrid({7, 32}), 0), InvalidGridError);
  CHECK_THROWS_AS(generate_blob2d(0, grid, 0), InvalidCountError);
}

TEST_CASE("blob2d prior map matches empirical per-pixel coverage") {
  SampleGrid grid({16, 16});
  const std::size_t images = 1500;
  Blob2DDataset ds = generate_blob2d(images, grid, 3);
  std::vector<double> empirical(grid.voxel_count(), 0.0);
  for (const BinaryMask& gt : ds.ground_truth) {
    for (std::size_t i = 0; i < empirical.size(); ++i) empirical[i] += gt.values()[i];
  }
  double max_abs = 0.0, mean_abs = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    double diff = std::abs(empirical[i] / images - ds.foreground_prior[i]);
    max_abs = std::max(max_abs, diff);
    mean_abs += diff;
  }
  mean_abs /= static_cast<double>(empirical.size());
  CHECK(max_abs < 0.08);
  CHECK(mean_abs < 0.02);
}

TEST_CASE("blob2d posterior with prior matches empirical frequencies") {
  // Bin pixels by (prior, intensity); the empirical foreground rate in each
  // bin must match the mean analytic posterior of its members.
  SampleGrid grid({16, 16});
  const std::size_t images = 3000;
  Blob2DDataset ds = generate_blob2d(images, grid, 9);
  const double t_lo = -1.5, t_hi = 1.5, t_width = 0.5;
  const std::size_t t_bins = 6, p_bins = 4;
  std::vector<std::size_t> count(t_bins * p_bins, 0), positive(t_bins * p_bins, 0);
  std::vector<double> posterior_sum(t_bins * p_bins, 0.0);
  for (std::size_t img = 0; img < images; ++img) {
    for (std::size_t i = 0; i < grid.voxel_count(); ++i) {
      double t = ds.images[img][i];
      double prior = ds.foreground_prior[i];
      if (t < t_lo || t >= t_hi) continue;
      std::size_t tb = static_cast<std::size_t>((t - t_lo) / t_width);
      std::size_t pb = std::min(p_bins - 1, static_cast<std::size_t>(prior * p_bins));
      std::size_t b = tb * p_bins + pb;
      ++count[b];
      positive[b] += ds.ground_truth[img].values()[i];
      posterior_sum[b] += analytic_probability_with_prior(t, prior);
    }
  }
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] < 2000) continue;
    double observed = static_cast<double>(positive[b]) / static_cast<double>(count[b]);
    double expected = posterior_sum[b] / static_cast<double>(count[b]);
    double tolerance = 4.0 / std::sqrt(static_cast<double>(count[b])) + 0.01;
    CHECK(std::abs(observed - expected) < tolerance);
  }
}
