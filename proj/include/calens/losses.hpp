#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "calens/types.hpp"

namespace calens {

// One weight per foreground class. Negative weights promote sensitivity,
// positive weights promote precision; w = 0 recovers the standard sum of
// cross-entropy and soft-Dice loss.
struct LossWeights {
  std::vector<double> w;

  static LossWeights uniform(double value, std::size_t num_foreground = 1) {
    return LossWeights{std::vector<double>(num_foreground, value)};
  }
};

// Soft confusion totals for one foreground class.
struct ConfusionTotals {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double tn = 0.0;
};

struct LossResult {
  double loss = 0.0;
  // d loss / d p for every prediction entry, voxel-major like SoftPrediction.
  std::vector<double> grad;
};

// Probabilities are clamped to [kProbabilityFloor, 1] inside the log.
constexpr double kProbabilityFloor = 1e-7;
// Tversky smoothing added to numerator and denominator.
constexpr double kDefaultTverskyEps = 1.0;

double sigmoid(double x);

ConfusionTotals soft_confusion(const OneHotLabel& y, const SoftPrediction& p, std::size_t cls);

// Class-weighted cross-entropy: -(1/N) sum_i [ y_0i log p_0i +
// sum_c exp(-w_c) y_ci log p_ci ].
LossResult weighted_cross_entropy(const OneHotLabel& y, const SoftPrediction& p,
                                  const LossWeights& w);

// Tversky loss (1/C) sum_c [ 1 - (TP_c + eps) / (TP_c + sigmoid(w_c) FP_c +
// sigmoid(-w_c) FN_c + eps) ] from soft per-class confusion totals.
LossResult weighted_tversky_loss(const OneHotLabel& y, const SoftPrediction& p,
                                 const LossWeights& w, double eps = kDefaultTverskyEps);

// Sum of the two terms above; gradients add elementwise.
LossResult combined_loss(const OneHotLabel& y, const SoftPrediction& p, const LossWeights& w,
                         double eps = kDefaultTverskyEps);

// Span-level kernels operating on voxel-major raw arrays. The typed
// operations above forward here; trainers and finite-difference checks use
// these directly so predictions need not be re-validated per evaluation.
LossResult weighted_cross_entropy_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                                      std::size_t num_classes, const LossWeights& w);
LossResult weighted_tversky_loss_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                                     std::size_t num_classes, const LossWeights& w, double eps);
LossResult combined_loss_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                             std::size_t num_classes, const LossWeights& w, double eps);

}  // namespace calens
