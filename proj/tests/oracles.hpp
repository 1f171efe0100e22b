// Independent reference implementations used to pin expected values. These
// deliberately avoid the library's code paths: plain formulas, long-double
// Gaussian elimination and brute-force scans only.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracles {

inline double normal_pdf(double x, double mean) {
  const double inv_sqrt_2pi = 0.39894228040143267794;
  double d = x - mean;
  return inv_sqrt_2pi * std::exp(-0.5 * d * d);
}

// Posterior class-1 probability from the density ratio of the two
// unit-variance Gaussians at -1 and +1.
inline double density_ratio_probability(double x) {
  double p0 = normal_pdf(x, -1.0);
  double p1 = normal_pdf(x, 1.0);
  return p1 / (p0 + p1);
}

// Reference multi-class cross-entropy (no weighting, clamped like the
// implementation under test).
inline double reference_cross_entropy(std::span<const std::uint8_t> y, std::span<const double> p,
                                      std::size_t num_classes) {
  const std::size_t voxels = y.size() / num_classes;
  double sum = 0.0;
  for (std::size_t i = 0; i < voxels; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::size_t k = i * num_classes + c;
      if (y[k]) sum += std::log(std::max(p[k], 1e-7));
    }
  }
  return -sum / static_cast<double>(voxels);
}

// Reference soft-Dice loss: 1 - (TP + eps) / (TP + (FP + FN) / 2 + eps)
// averaged over foreground classes.
inline double reference_soft_dice_loss(std::span<const std::uint8_t> y,
                                       std::span<const double> p, std::size_t num_classes,
                                       double eps) {
  const std::size_t voxels = y.size() / num_classes;
  double loss = 0.0;
  for (std::size_t c = 1; c < num_classes; ++c) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < voxels; ++i) {
      std::size_t k = i * num_classes + c;
      if (y[k]) {
        tp += p[k];
        fn += 1.0 - p[k];
      } else {
        fp += p[k];
      }
    }
    loss += 1.0 - (tp + eps) / (tp + 0.5 * (fp + fn) + eps);
  }
  return loss / static_cast<double>(num_classes - 1);
}

// Central finite difference of f along coordinate k.
inline double central_difference(const std::function<double(std::span<const double>)>& f,
                                 std::vector<double> point, std::size_t k, double step) {
  point[k] += step;
  double up = f(point);
  point[k] -= 2.0 * step;
  double down = f(point);
  return (up - down) / (2.0 * step);
}

// Dense weighted least squares via long-double normal equations and Gaussian
// elimination with partial pivoting. Rows are (pattern bits, weight, target).
struct LsRow {
  std::uint32_t pattern;
  long double weight;
  long double target;
};

inline std::vector<double> dense_least_squares(const std::vector<LsRow>& rows, std::size_t n) {
  std::vector<long double> m(n * n, 0.0L), rhs(n, 0.0L);
  for (const LsRow& row : rows) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!((row.pattern >> j) & 1u)) continue;
      rhs[j] += row.weight * row.target;
      for (std::size_t k = 0; k < n; ++k) {
        if ((row.pattern >> k) & 1u) m[j * n + k] += row.weight;
      }
    }
  }
  // Gaussian elimination with partial pivoting.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(static_cast<double>(m[r * n + col])) >
          std::abs(static_cast<double>(m[pivot * n + col]))) {
        pivot = r;
      }
    }
    for (std::size_t c = 0; c < n; ++c) std::swap(m[col * n + c], m[pivot * n + c]);
    std::swap(rhs[col], rhs[pivot]);
    if (m[col * n + col] == 0.0L) {
      throw std::runtime_error("oracle system is singular");
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      long double factor = m[r * n + col] / m[col * n + col];
      for (std::size_t c = col; c < n; ++c) m[r * n + c] -= factor * m[col * n + c];
      rhs[r] -= factor * rhs[col];
    }
  }
  std::vector<double> solution(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    long double sum = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) sum -= m[i * n + c] * solution[c];
    solution[i] = static_cast<double>(sum / m[i * n + i]);
  }
  return solution;
}

// Brute-force per-voxel pattern scan, independent of the library's counter.
struct BruteCounts {
  std::uint64_t voxels = 0;
  std::uint64_t foreground = 0;
};

inline std::map<std::uint32_t, BruteCounts> brute_force_patterns(
    const std::vector<std::vector<std::uint8_t>>& masks, std::span<const std::uint8_t> gt) {
  std::map<std::uint32_t, BruteCounts> counts;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    std::uint32_t pattern = 0;
    for (std::size_t k = 0; k < masks.size(); ++k) {
      if (masks[k][i]) pattern |= 1u << k;
    }
    counts[pattern].voxels += 1;
    counts[pattern].foreground += gt[i];
  }
  return counts;
}

}  // namespace oracles
