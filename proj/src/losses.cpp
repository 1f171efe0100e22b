#include "calens/losses.hpp"

#include <cmath>
#include <string>

#include "calens/errors.hpp"

namespace calens {

namespace {

void check_inputs(const OneHotLabel& y, const SoftPrediction& p, const LossWeights& w) {
  validate_same_grid(y.grid(), p.grid());
  if (y.num_classes() != p.num_classes()) {
    throw ClassCountMismatchError("label and prediction class counts differ");
  }
  if (w.w.size() != y.num_foreground_classes()) {
    throw ClassCountMismatchError("expected " + std::to_string(y.num_foreground_classes()) +
                                  " loss weights, got " + std::to_string(w.w.size()));
  }
}

void check_raw(std::span<const std::uint8_t> y, std::span<const double> p,
               std::size_t num_classes, const LossWeights& w) {
  if (num_classes < 2 || y.size() != p.size() || y.size() % num_classes != 0) {
    throw ClassCountMismatchError("inconsistent raw loss inputs");
  }
  if (w.w.size() != num_classes - 1) {
    throw ClassCountMismatchError("loss weight count does not match foreground classes");
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

ConfusionTotals soft_confusion(const OneHotLabel& y, const SoftPrediction& p, std::size_t cls) {
  validate_same_grid(y.grid(), p.grid());
  if (y.num_classes() != p.num_classes()) {
    throw ClassCountMismatchError("label and prediction class counts differ");
  }
  ConfusionTotals t;
  for (std::size_t i = 0; i < y.grid().voxel_count(); ++i) {
    double yi = y.at(i, cls);
    double pi = p.at(i, cls);
    t.tp += pi * yi;
    t.fp += pi * (1.0 - yi);
    t.fn += (1.0 - pi) * yi;
    t.tn += (1.0 - pi) * (1.0 - yi);
  }
  return t;
}

LossResult weighted_cross_entropy_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                                      std::size_t num_classes, const LossWeights& w) {
  check_raw(y, p, num_classes, w);
  const std::size_t voxels = y.size() / num_classes;
  std::vector<double> class_scale(num_classes, 1.0);
  for (std::size_t c = 1; c < num_classes; ++c) {
    class_scale[c] = std::exp(-w.w[c - 1]);
  }
  LossResult result;
  result.grad.assign(p.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(voxels);
  double sum = 0.0;
  for (std::size_t i = 0; i < voxels; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::size_t k = i * num_classes + c;
      if (y[k] == 0) continue;
      double pc = p[k];
      if (pc <= kProbabilityFloor) {
        sum += class_scale[c] * std::log(kProbabilityFloor);
        // clamp active: the expression is locally constant in p.
      } else {
        double clamped = pc < 1.0 ? pc : 1.0;
        sum += class_scale[c] * std::log(clamped);
        result.grad[k] = -inv_n * class_scale[c] / clamped;
      }
    }
  }
  result.loss = -inv_n * sum;
  return result;
}

LossResult weighted_tversky_loss_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                                     std::size_t num_classes, const LossWeights& w, double eps) {
  check_raw(y, p, num_classes, w);
  if (!(eps > 0.0)) {
    throw InvalidArgumentError("tversky smoothing must be positive");
  }
  const std::size_t voxels = y.size() / num_classes;
  const std::size_t num_fg = num_classes - 1;
  LossResult result;
  result.grad.assign(p.size(), 0.0);
  const double inv_c = 1.0 / static_cast<double>(num_fg);
  for (std::size_t c = 1; c < num_classes; ++c) {
    const double fp_share = sigmoid(w.w[c - 1]);
    const double fn_share = sigmoid(-w.w[c - 1]);
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < voxels; ++i) {
      std::size_t k = i * num_classes + c;
      double pc = p[k];
      if (y[k]) {
        tp += pc;
        fn += 1.0 - pc;
      } else {
        fp += pc;
      }
    }
    const double numer = tp + eps;
    const double denom = tp + fp_share * fp + fn_share * fn + eps;
    result.loss += inv_c * (1.0 - numer / denom);
    const double denom_sq = denom * denom;
    for (std::size_t i = 0; i < voxels; ++i) {
      std::size_t k = i * num_classes + c;
      double dy = y[k] ? 1.0 : 0.0;
      double d_numer = dy;
      double d_denom = dy + fp_share * (1.0 - dy) - fn_share * dy;
      result.grad[k] = -inv_c * (d_numer * denom - numer * d_denom) / denom_sq;
    }
  }
  return result;
}

LossResult combined_loss_raw(std::span<const std::uint8_t> y, std::span<const double> p,
                             std::size_t num_classes, const LossWeights& w, double eps) {
  LossResult ce = weighted_cross_entropy_raw(y, p, num_classes, w);
  LossResult tv = weighted_tversky_loss_raw(y, p, num_classes, w, eps);
  LossResult combined;
  combined.loss = ce.loss + tv.loss;
  combined.grad.resize(ce.grad.size());
  for (std::size_t k = 0; k < combined.grad.size(); ++k) {
    combined.grad[k] = ce.grad[k] + tv.grad[k];
  }
  return combined;
}

LossResult weighted_cross_entropy(const OneHotLabel& y, const SoftPrediction& p,
                                  const LossWeights& w) {
  check_inputs(y, p, w);
  return weighted_cross_entropy_raw(y.values(), p.values(), y.num_classes(), w);
}

LossResult weighted_tversky_loss(const OneHotLabel& y, const SoftPrediction& p,
                                 const LossWeights& w, double eps) {
  check_inputs(y, p, w);
  return weighted_tversky_loss_raw(y.values(), p.values(), y.num_classes(), w, eps);
}

LossResult combined_loss(const OneHotLabel& y, const SoftPrediction& p, const LossWeights& w,
                         double eps) {
  check_inputs(y, p, w);
  return combined_loss_raw(y.values(), p.values(), y.num_classes(), w, eps);
}

}  // namespace calens
