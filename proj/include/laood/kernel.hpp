#pragma once

#include <span>

#include "laood/matrix.hpp"

namespace laood::kernel {

/// Gaussian RBF kernel k(x, y) = exp(-gamma * ||x - y||^2).
///
/// The implicit feature map is never materialized; every detector works
/// purely through kernel evaluations. gamma == 0 is only accepted with
/// `diagnostic` set, in which case k == 1 everywhere.
struct KernelParams {
  double gamma = 1.0;
  bool diagnostic = false;

  /// Throws laood::Error when the invariants above are violated.
  void validate() const;
};

/// Sum of squared coordinate differences, accumulated directly.
double squared_distance(std::span<const double> x, std::span<const double> y);

/// exp(-gamma * ||x - y||^2). Throws DimensionError on length mismatch and
/// Error on non-finite input.
double rbf(std::span<const double> x, std::span<const double> y, const KernelParams& params);

enum class GramMode {
  direct,    // sum of squared differences, bit-identical to rbf()
  expanded,  // ||x||^2 + ||y||^2 - 2 x.y, clamped at 0
};

/// Symmetric n x n Gram matrix. Rows are computed in parallel.
Matrix gram(const FeatureMatrix& X, const KernelParams& params, GramMode mode = GramMode::direct);

}  // namespace laood::kernel
