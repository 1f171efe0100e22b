#include <doctest.h>

#include <cmath>
#include <vector>

#include "calens/errors.hpp"
#include "calens/losses.hpp"
#include "calens/rng.hpp"
#include "calens/types.hpp"

#include "oracles.hpp"

using namespace calens;
using doctest::Approx;

namespace {

struct Fixture {
  std::vector<std::uint8_t> y;  // voxel-major one-hot
  std::vector<double> p;        // voxel-major probabilities
  std::size_t num_classes;
};

Fixture random_fixture(CounterRng& rng, std::size_t max_voxels, std::size_t max_foreground) {
  std::size_t voxels = 1 + rng.next_below(max_voxels);
  std::size_t classes = 2 + rng.next_below(max_foreground);
  Fixture f{{}, {}, classes};
  f.y.assign(voxels * classes, 0);
  f.p.assign(voxels * classes, 0.0);
  for (std::size_t i = 0; i < voxels; ++i) {
    f.y[i * classes + rng.next_below(classes)] = 1;
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      double v = rng.next_uniform(0.05, 1.0);
      f.p[i * classes + c] = v;
      sum += v;
    }
    for (std::size_t c = 0; c < classes; ++c) f.p[i * classes + c] /= sum;
  }
  return f;
}

void check_gradient(const Fixture& f, const LossWeights& w, double eps, int which) {
  auto eval = [&](std::span<const double> p) {
    switch (which) {
      case 0: return weighted_cross_entropy_raw(f.y, p, f.num_classes, w).loss;
      case 1: return weighted_tversky_loss_raw(f.y, p, f.num_classes, w, eps).loss;
      default: return combined_loss_raw(f.y, p, f.num_classes, w, eps).loss;
    }
  };
  LossResult result;
  switch (which) {
    case 0: result = weighted_cross_entropy_raw(f.y, f.p, f.num_classes, w); break;
    case 1: result = weighted_tversky_loss_raw(f.y, f.p, f.num_classes, w, eps); break;
    default: result = combined_loss_raw(f.y, f.p, f.num_classes, w, eps); break;
  }
  for (std::size_t k = 0; k < f.p.size(); ++k) {
    double fd = oracles::central_difference(eval, f.p, k, 1e-5);
    double denom = std::max({std::abs(result.grad[k]), std::abs(fd), 1e-8});
    CHECK(std::abs(result.grad[k] - fd) / denom < 1e-4);
  }
}

}  // namespace

TEST_CASE("weighted cross-entropy hand values") {
  std::vector<std::uint8_t> y = {0, 1};
  std::vector<double> p = {0.5, 0.5};
  LossResult r0 = weighted_cross_entropy_raw(y, p, 2, LossWeights::uniform(0.0));
  CHECK(r0.loss == Approx(0.693147).epsilon(1e-6));

  LossResult rm1 = weighted_cross_entropy_raw(y, p, 2, LossWeights::uniform(-1.0));
  CHECK(rm1.loss == Approx(1.884169).epsilon(1e-6));

  // Exact one-hot prediction: log(1) terms only.
  std::vector<std::uint8_t> y2 = {1, 0, 0, 1};
  std::vector<double> p2 = {1.0, 0.0, 0.0, 1.0};
  for (double w : {-3.0, 0.0, 2.0}) {
    CHECK(weighted_cross_entropy_raw(y2, p2, 2, LossWeights::uniform(w)).loss == 0.0);
  }
}

TEST_CASE("weighted cross-entropy with w=0 equals the reference cross-entropy") {
  CounterRng rng(31);
  for (int round = 0; round < 30; ++round) {
    Fixture f = random_fixture(rng, 64, 2);
    LossWeights w = LossWeights::uniform(0.0, f.num_classes - 1);
    double ours = weighted_cross_entropy_raw(f.y, f.p, f.num_classes, w).loss;
    double reference = oracles::reference_cross_entropy(f.y, f.p, f.num_classes);
    CHECK(ours == Approx(reference).epsilon(1e-10));
  }
}

TEST_CASE("tversky loss hand values") {
  // Perfect binary prediction: zero loss at any weight.
  std::vector<std::uint8_t> y = {1, 0, 0, 1, 0, 1};
  std::vector<double> p = {1.0, 0.0, 0.0, 1.0, 0.0, 1.0};
  for (double w : {-2.0, 0.0, 3.0}) {
    CHECK(weighted_tversky_loss_raw(y, p, 2, LossWeights::uniform(w), 1.0).loss == 0.0);
  }

  // TP=1, FP=1, FN=1 at w=0 gives 1 - 1/2 = 0.5 as eps -> 0, matching
  // 1 - DSC with DSC = 2/(2+1+1).
  std::vector<std::uint8_t> y2 = {0, 1, 1, 0, 0, 1};
  std::vector<double> p2 = {0.0, 1.0, 0.0, 1.0, 1.0, 0.0};
  double loss = weighted_tversky_loss_raw(y2, p2, 2, LossWeights::uniform(0.0), 1e-9).loss;
  CHECK(loss == Approx(0.5).epsilon(1e-6));

  // Large w saturates the sigmoid: loss -> 1 - TP/(TP+FP) = 1 - precision.
  double saturated = weighted_tversky_loss_raw(y2, p2, 2, LossWeights::uniform(40.0), 1e-9).loss;
  CHECK(saturated == Approx(0.5).epsilon(1e-6));  // TP=1, FP=1
}

TEST_CASE("tversky reduces to the reference soft-Dice loss at w=0") {
  CounterRng rng(37);
  for (int round = 0; round < 30; ++round) {
    Fixture f = random_fixture(rng, 64, 2);
    LossWeights w = LossWeights::uniform(0.0, f.num_classes - 1);
    double ours = weighted_tversky_loss_raw(f.y, f.p, f.num_classes, w, 1.0).loss;
    double reference = oracles::reference_soft_dice_loss(f.y, f.p, f.num_classes, 1.0);
    CHECK(ours == Approx(reference).epsilon(1e-10));
  }
}

TEST_CASE("combined loss is the bitwise sum of its components") {
  CounterRng rng(41);
  for (int round = 0; round < 20; ++round) {
    Fixture f = random_fixture(rng, 64, 2);
    LossWeights w = LossWeights::uniform(rng.next_uniform(-3.0, 3.0), f.num_classes - 1);
    LossResult ce = weighted_cross_entropy_raw(f.y, f.p, f.num_classes, w);
    LossResult tv = weighted_tversky_loss_raw(f.y, f.p, f.num_classes, w, 1.0);
    LossResult both = combined_loss_raw(f.y, f.p, f.num_classes, w, 1.0);
    CHECK(both.loss == ce.loss + tv.loss);
    for (std::size_t k = 0; k < both.grad.size(); ++k) {
      CHECK(both.grad[k] == ce.grad[k] + tv.grad[k]);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  CounterRng rng(43);
  for (int round = 0; round < 10; ++round) {
    Fixture f = random_fixture(rng, 16, 2);
    for (double wv : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
      LossWeights w = LossWeights::uniform(wv, f.num_classes - 1);
      check_gradient(f, w, 1.0, 0);
      check_gradient(f, w, 1.0, 1);
      check_gradient(f, w, 1.0, 2);
    }
  }
}

TEST_CASE("tversky monotonicity in w") {
  // FP=0, FN>0: increasing w shifts the penalty away from FN, loss decreases.
  std::vector<std::uint8_t> y_fn = {0, 1, 0, 1, 1, 0};
  std::vector<double> p_fn = {0.0, 1.0, 1.0, 0.0, 1.0, 0.0};  // TP=1, FN=1, FP=0
  double fn_m2 = weighted_tversky_loss_raw(y_fn, p_fn, 2, LossWeights::uniform(-2.0), 1e-9).loss;
  double fn_0 = weighted_tversky_loss_raw(y_fn, p_fn, 2, LossWeights::uniform(0.0), 1e-9).loss;
  double fn_p2 = weighted_tversky_loss_raw(y_fn, p_fn, 2, LossWeights::uniform(2.0), 1e-9).loss;
  CHECK(fn_m2 > fn_0);
  CHECK(fn_0 > fn_p2);

  // FP>0, FN=0: increasing w makes false positives more expensive.
  std::vector<std::uint8_t> y_fp = {0, 1, 1, 0, 1, 0};
  std::vector<double> p_fp = {0.0, 1.0, 0.0, 1.0, 1.0, 0.0};  // TP=1, FP=1, FN=0
  double fp_m2 = weighted_tversky_loss_raw(y_fp, p_fp, 2, LossWeights::uniform(-2.0), 1e-9).loss;
  double fp_0 = weighted_tversky_loss_raw(y_fp, p_fp, 2, LossWeights::uniform(0.0), 1e-9).loss;
  double fp_p2 = weighted_tversky_loss_raw(y_fp, p_fp, 2, LossWeights::uniform(2.0), 1e-9).loss;
  CHECK(fp_m2 < fp_0);
  CHECK(fp_0 < fp_p2);
}

TEST_CASE("sigmoid shares sum to one") {
  CounterRng rng(47);
  for (int round = 0; round < 100; ++round) {
    double w = rng.next_uniform(-20.0, 20.0);
    CHECK(sigmoid(w) + sigmoid(-w) == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("confusion totals sum to the voxel count") {
  CounterRng rng(53);
  Fixture f = random_fixture(rng, 64, 2);
  SampleGrid grid({static_cast<std::uint32_t>(f.y.size() / f.num_classes)});
  OneHotLabel y(grid, f.num_classes, f.y);
  SoftPrediction p(grid, f.num_classes, f.p);
  for (std::size_t c = 0; c < f.num_classes; ++c) {
    ConfusionTotals t = soft_confusion(y, p, c);
    CHECK(t.tp + t.fp + t.fn + t.tn == Approx(grid.voxel_count()).epsilon(1e-9));
  }
}

TEST_CASE("typed loss entry points validate their inputs") {
  OneHotLabel y(SampleGrid({2}), 2, {1, 0, 0, 1});
  SoftPrediction p(SampleGrid({2}), 2, {0.5, 0.5, 0.5, 0.5});
  SoftPrediction p3(SampleGrid({2}), 3, {0.5, 0.25, 0.25, 0.5, 0.25, 0.25});
  SoftPrediction p_other(SampleGrid({3}), 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  LossWeights w = LossWeights::uniform(0.0);

  CHECK_NOTHROW(combined_loss(y, p, w));
  CHECK_THROWS_AS(combined_loss(y, p3, w), ClassCountMismatchError);
  CHECK_THROWS_AS(combined_loss(y, p_other, w), GridMismatchError);
  CHECK_THROWS_AS(weighted_tversky_loss(y, p, w, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(combined_loss(y, p, LossWeights{{0.0, 1.0}}), ClassCountMismatchError);
}
