#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "laood/matrix.hpp"

namespace laood::preprocess {

/// Activation map of one sample, stored channel-major (c, h, w).
struct Tensor3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // size channels * height * width

  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[(c * height + h) * width + w];
  }
};

/// Per-channel spatial mean: C x H x W -> length C.
std::vector<double> global_average_pool(const Tensor3& tensor);

/// Column mean and population standard deviation of a training matrix.
/// Constant columns keep std = 1 and are listed in `flagged` so they pass
/// through centered.
struct StandardizeStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::size_t> flagged;

  std::size_t dim() const { return mean.size(); }
  bool is_flagged(std::size_t column) const;
};

StandardizeStats fit_stats(const FeatureMatrix& X);

/// (x - mean) / std column-wise.
FeatureMatrix apply_stats(const StandardizeStats& stats, const FeatureMatrix& X);
std::vector<double> apply_stats(const StandardizeStats& stats, std::span<const double> x);

/// Inverse of apply_stats.
FeatureMatrix unapply_stats(const StandardizeStats& stats, const FeatureMatrix& Z);

}  // namespace laood::preprocess
