#include "calens/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "calens/errors.hpp"

namespace calens {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
// Eigenvectors are returned as columns of V. Plenty accurate for the
// n <= 20 normal matrices this module produces.
void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                  std::vector<double>& eigenvectors) {
  eigenvectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off <= 1e-300) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (apq == 0.0) continue;
        double app = a[p * n + p];
        double aqq = a[q * n + q];
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(tau * tau + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k * n + p];
          double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p * n + k];
          double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = eigenvectors[k * n + p];
          double vkq = eigenvectors[k * n + q];
          eigenvectors[k * n + p] = c * vkp - s * vkq;
          eigenvectors[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
}

// Minimum-norm solution of the symmetric PSD system M x = rhs via the
// eigendecomposition pseudoinverse. Sets `degenerate` when rank < n.
std::vector<double> solve_psd(const std::vector<double>& m, std::span<const double> rhs,
                              std::size_t n, bool& degenerate) {
  std::vector<double> eigenvalues, eigenvectors;
  jacobi_eigen(m, n, eigenvalues, eigenvectors);
  double max_abs = 0.0;
  for (double v : eigenvalues) max_abs = std::max(max_abs, std::abs(v));
  const double threshold = max_abs * static_cast<double>(n) * 1e-13;

  std::vector<double> solution(n, 0.0);
  std::size_t rank = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(eigenvalues[k]) <= threshold) continue;
    ++rank;
    double projection = 0.0;
    for (std::size_t i = 0; i < n; ++i) projection += eigenvectors[i * n + k] * rhs[i];
    projection /= eigenvalues[k];
    for (std::size_t i = 0; i < n; ++i) solution[i] += eigenvectors[i * n + k] * projection;
  }
  degenerate = rank < n;
  return solution;
}

struct Row {
  std::uint32_t pattern;
  double weight;
  double rate;
};

std::vector<double> normal_matrix(std::span<const Row> rows, std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (const Row& row : rows) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!((row.pattern >> j) & 1u)) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if ((row.pattern >> k) & 1u) m[j * n + k] += row.weight;
      }
    }
  }
  return m;
}

std::vector<double> normal_rhs(std::span<const Row> rows, std::size_t n) {
  std::vector<double> rhs(n, 0.0);
  for (const Row& row : rows) {
    for (std::size_t j = 0; j < n; ++j) {
      if ((row.pattern >> j) & 1u) rhs[j] += row.weight * row.rate;
    }
  }
  return rhs;
}

// Lawson-Hanson active set for min ||.|| s.t. a >= 0, on the normal system.
std::vector<double> solve_nonnegative(const std::vector<double>& m, std::span<const double> rhs,
                                      std::size_t n, bool& degenerate) {
  std::vector<bool> passive(n, false);
  std::vector<double> a(n, 0.0);
  degenerate = false;

  auto solve_passive = [&](std::vector<double>& z) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    std::vector<double> sub(idx.size() * idx.size());
    std::vector<double> sub_rhs(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      sub_rhs[r] = rhs[idx[r]];
      for (std::size_t c = 0; c < idx.size(); ++c) sub[r * idx.size() + c] = m[idx[r] * n + idx[c]];
    }
    bool sub_degenerate = false;
    std::vector<double> sub_sol = solve_psd(sub, sub_rhs, idx.size(), sub_degenerate);
    degenerate = degenerate || sub_degenerate;
    z.assign(n, 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r) z[idx[r]] = sub_sol[r];
  };

  for (std::size_t outer = 0; outer < 4 * n + 8; ++outer) {
    // Gradient of the objective at a.
    double best = 0.0;
    std::size_t best_j = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (passive[j]) continue;
      double g = rhs[j];
      for (std::size_t k = 0; k < n; ++k) g -= m[j * n + k] * a[k];
      if (g > best + 1e-14) {
        best = g;
        best_j = j;
      }
    }
    if (best_j == n) break;
    passive[best_j] = true;

    std::vector<double> z;
    solve_passive(z);
    for (std::size_t inner = 0; inner < 4 * n + 8 && best_j != n; ++inner) {
      double alpha = 1.0;
      bool clipped = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (!passive[j] || z[j] > 1e-14) continue;
        double step = a[j] / (a[j] - z[j]);
        if (step < alpha) {
          alpha = step;
          clipped = true;
        }
      }
      if (!clipped) break;
      for (std::size_t j = 0; j < n; ++j) {
        if (passive[j]) a[j] += alpha * (z[j] - a[j]);
        if (passive[j] && a[j] <= 1e-14) {
          a[j] = 0.0;
          passive[j] = false;
        }
      }
      solve_passive(z);
    }
    a = z;
    for (std::size_t j = 0; j < n; ++j)
      if (a[j] < 0.0) a[j] = 0.0;
  }
  return a;
}

}  // namespace

PatternHistogram::PatternHistogram(std::size_t n_models) : n_models_(n_models) {
  if (n_models_ == 0) {
    throw InvalidArgumentError("pattern histogram needs at least one model");
  }
  if (n_models_ > kMaxEnsembleModels) {
    throw TooManyModelsError("ensemble size " + std::to_string(n_models_) + " exceeds the limit of " +
                             std::to_string(kMaxEnsembleModels) + " models");
  }
}

void PatternHistogram::add(std::uint32_t pattern, std::uint64_t voxels, std::uint64_t foreground) {
  if (n_models_ < 32 && (pattern >> n_models_) != 0) {
    throw InvalidArgumentError("pattern has bits beyond the model count");
  }
  if (foreground > voxels) {
    throw InvalidArgumentError("foreground count exceeds voxel count");
  }
  if (voxels == 0) return;
  PatternCounts& counts = entries_[pattern];
  counts.voxel_count += voxels;
  counts.foreground_count += foreground;
}

void PatternHistogram::merge(const PatternHistogram& other) {
  if (other.n_models_ != n_models_) {
    throw LengthMismatchError("cannot merge histograms over different ensemble sizes");
  }
  for (const auto& [pattern, counts] : other.entries_) {
    add(pattern, counts.voxel_count, counts.foreground_count);
  }
}

std::uint64_t PatternHistogram::total_voxels() const {
  std::uint64_t total = 0;
  for (const auto& [pattern, counts] : entries_) total += counts.voxel_count;
  return total;
}

PatternHistogram count_patterns(std::span<const BinaryMask> masks, const BinaryMask& gt) {
  if (masks.empty()) {
    throw InvalidArgumentError("pattern counting needs at least one mask");
  }
  PatternHistogram histogram(masks.size());
  for (const BinaryMask& mask : masks) {
    validate_pair(mask, gt);
  }
  const std::size_t voxels = gt.grid().voxel_count();
  for (std::size_t i = 0; i < voxels; ++i) {
    std::uint32_t pattern = 0;
    for (std::size_t k = 0; k < masks.size(); ++k) {
      pattern |= static_cast<std::uint32_t>(masks[k].values()[i]) << k;
    }
    histogram.add(pattern, 1, gt.values()[i]);
  }
  return histogram;
}

PatternHistogram count_patterns(std::span<const std::vector<BinaryMask>> masks_per_image,
                                std::span<const BinaryMask> gt_per_image) {
  if (masks_per_image.size() != gt_per_image.size() || masks_per_image.empty()) {
    throw LengthMismatchError("need one mask list per ground-truth image");
  }
  PatternHistogram histogram = count_patterns(masks_per_image[0], gt_per_image[0]);
  for (std::size_t img = 1; img < masks_per_image.size(); ++img) {
    histogram.merge(count_patterns(masks_per_image[img], gt_per_image[img]));
  }
  return histogram;
}

CalibrationCoefficients solve_coefficients(const PatternHistogram& histogram,
                                           const SolveOptions& options) {
  const std::size_t n = histogram.n_models();
  CalibrationCoefficients result;
  result.options = options;

  std::vector<Row> rows;
  for (const auto& [pattern, counts] : histogram.entries()) {
    if (pattern == 0) {
      // The all-zero row reads 0 = fg_count and cannot be satisfied by any
      // coefficients; surface its rate as a diagnostic instead.
      result.dropped_patterns.push_back(pattern);
      result.zero_pattern_voxels = counts.voxel_count;
      result.zero_pattern_fg_rate =
          static_cast<double>(counts.foreground_count) / static_cast<double>(counts.voxel_count);
      continue;
    }
    double rate =
        static_cast<double>(counts.foreground_count) / static_cast<double>(counts.voxel_count);
    double weight = options.weighting == RowWeighting::counts
                        ? static_cast<double>(counts.voxel_count)
                        : 1.0;
    rows.push_back(Row{pattern, weight, rate});
  }
  if (rows.empty()) {
    throw InvalidArgumentError("no nonzero pattern observed; cannot fit coefficients");
  }

  std::vector<double> m;
  std::vector<double> rhs;
  if (options.weighting == RowWeighting::counts) {
    // Build the normal system in exact integer arithmetic and divide out the
    // gcd, so scaling every count by a constant yields a bit-identical solve.
    std::vector<std::uint64_t> m_int(n * n, 0), rhs_int(n, 0);
    for (const auto& [pattern, counts] : histogram.entries()) {
      if (pattern == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (!((pattern >> j) & 1u)) continue;
        rhs_int[j] += counts.foreground_count;
        for (std::size_t k = 0; k < n; ++k) {
          if ((pattern >> k) & 1u) m_int[j * n + k] += counts.voxel_count;
        }
      }
    }
    std::uint64_t g = 0;
    for (std::uint64_t v : m_int) g = std::gcd(g, v);
    for (std::uint64_t v : rhs_int) g = std::gcd(g, v);
    if (g == 0) g = 1;
    m.resize(n * n);
    rhs.resize(n);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<double>(m_int[i] / g);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = static_cast<double>(rhs_int[i] / g);
  } else {
    m = normal_matrix(rows, n);
    rhs = normal_rhs(rows, n);
  }

  result.a = options.nonnegative ? solve_nonnegative(m, rhs, n, result.degenerate)
                                 : solve_psd(m, rhs, n, result.degenerate);

  double weighted_sq = 0.0;
  double total_weight = 0.0;
  for (const Row& row : rows) {
    double fit = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if ((row.pattern >> k) & 1u) fit += result.a[k];
    }
    double r = fit - row.rate;
    weighted_sq += row.weight * r * r;
    total_weight += row.weight;
  }
  result.residual_norm = std::sqrt(weighted_sq / total_weight);
  return result;
}

ComposedHeatmap compose_heatmap(std::span<const BinaryMask> masks,
                                std::span<const double> coefficients) {
  if (masks.empty()) {
    throw InvalidArgumentError("heatmap composition needs at least one mask");
  }
  if (masks.size() != coefficients.size()) {
    throw LengthMismatchError("coefficient count does not match mask count");
  }
  for (std::size_t k = 1; k < masks.size(); ++k) {
    validate_pair(masks[0], masks[k]);
  }
  const std::size_t voxels = masks[0].grid().voxel_count();
  std::vector<double> values(voxels, 0.0);
  std::size_t clipped_low = 0, clipped_high = 0;
  for (std::size_t i = 0; i < voxels; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < masks.size(); ++k) {
      if (masks[k].values()[i]) sum += coefficients[k];
    }
    if (sum < 0.0) {
      sum = 0.0;
      ++clipped_low;
    } else if (sum > 1.0) {
      sum = 1.0;
      ++clipped_high;
    }
    values[i] = sum;
  }
  return ComposedHeatmap{Heatmap(masks[0].grid(), std::move(values)), clipped_low, clipped_high};
}

ComposedHeatmap compose_heatmap(std::span<const BinaryMask> masks,
                                const CalibrationCoefficients& coefficients) {
  return compose_heatmap(masks, std::span<const double>(coefficients.a));
}

Heatmap mean_heatmap(std::span<const BinaryMask> masks) {
  if (masks.empty()) {
    throw InvalidArgumentError("mean heatmap needs at least one mask");
  }
  for (std::size_t k = 1; k < masks.size(); ++k) {
    validate_pair(masks[0], masks[k]);
  }
  const std::size_t voxels = masks[0].grid().voxel_count();
  std::vector<double> values(voxels, 0.0);
  for (std::size_t i = 0; i < voxels; ++i) {
    std::size_t fired = 0;
    for (const BinaryMask& mask : masks) fired += mask.values()[i];
    values[i] = static_cast<double>(fired) / static_cast<double>(masks.size());
  }
  return Heatmap(masks[0].grid(), std::move(values));
}

}  // namespace calens
