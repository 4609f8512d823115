#include "laood/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "laood/error.hpp"

namespace laood::preprocess {

namespace {
// Columns whose deviation falls below this (relative to max(1, |mean|)) are
// treated as constant.
constexpr double kMinRelStd = 1e-12;

void check_dim(const StandardizeStats& stats, std::size_t cols) {
  if (cols != stats.dim())
    throw DimensionError("standardize: expected " + std::to_string(stats.dim()) + " columns, got " +
                         std::to_string(cols));
}
}  // namespace

std::vector<double> global_average_pool(const Tensor3& t) {
  if (t.channels == 0 || t.height == 0 || t.width == 0)
    throw Error("global_average_pool: zero-sized dimension");
  const std::size_t plane = t.height * t.width;
  if (t.values.size() != t.channels * plane)
    throw DimensionError("global_average_pool: value count does not match C*H*W");
  std::vector<double> out(t.channels);
  for (std::size_t c = 0; c < t.channels; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += t.values[c * plane + k];
    out[c] = s / static_cast<double>(plane);
  }
  return out;
}

bool StandardizeStats::is_flagged(std::size_t column) const {
  return std::binary_search(flagged.begin(), flagged.end(), column);
}

StandardizeStats fit_stats(const FeatureMatrix& X) {
  const std::size_t n = X.rows(), d = X.cols();
  if (n < 2) throw Error("fit_stats: need at least 2 rows, got " + std::to_string(n));

  StandardizeStats stats;
  stats.mean.assign(d, 0.0);
  stats.std.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) stats.mean[j] += X(i, j);
  for (double& m : stats.mean) m /= static_cast<double>(n);

  // two-pass variance
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = X(i, j) - stats.mean[j];
      stats.std[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    stats.std[j] = std::sqrt(stats.std[j] / static_cast<double>(n));
    if (!(stats.std[j] > kMinRelStd * std::max(1.0, std::abs(stats.mean[j])))) {
      stats.std[j] = 1.0;
      stats.flagged.push_back(j);
    }
  }
  return stats;
}

std::vector<double> apply_stats(const StandardizeStats& stats, std::span<const double> x) {
  check_dim(stats, x.size());
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - stats.mean[j]) / stats.std[j];
  return out;
}

FeatureMatrix apply_stats(const StandardizeStats& stats, const FeatureMatrix& X) {
  if (X.rows() > 0) check_dim(stats, X.cols());
  FeatureMatrix out(X.rows(), stats.dim());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out(i, j) = (X(i, j) - stats.mean[j]) / stats.std[j];
  return out;
}

FeatureMatrix unapply_stats(const StandardizeStats& stats, const FeatureMatrix& Z) {
  if (Z.rows() > 0) check_dim(stats, Z.cols());
  FeatureMatrix out(Z.rows(), stats.dim());
  for (std::size_t i = 0; i < Z.rows(); ++i)
    for (std::size_t j = 0; j < Z.cols(); ++j) out(i, j) = Z(i, j) * stats.std[j] + stats.mean[j];
  return out;
}

}  // namespace laood::preprocess
