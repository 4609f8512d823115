#pragma once

#include <cstddef>
#include <vector>

#include "laood/matrix.hpp"

namespace laood::pseudo_ood {

/// Knobs for edge detection and outward shifting.
struct ShiftConfig {
  std::size_t k_neighbors = 0;  // 0 selects min(20, n - 1)
  double edge_threshold = 0.1;  // in (0, 1]
  double shift_scale = 1.0;

  std::size_t neighbors_for(std::size_t n) const;
  void validate() const;
};

/// Edge statistics of one row. `direction` points toward the bulk of the
/// neighbors; it is the zero vector when `score` == 0.
struct EdgeInfo {
  double score = 0.0;
  std::vector<double> direction;
  double mean_neighbor_distance = 0.0;
  std::size_t neighbors_used = 0;  // neighbors with a defined unit vector
  bool degenerate = false;         // direction undefined
};

/// Indices of the k nearest rows of `i` (self excluded), ties to lower index.
std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& X, std::size_t i, std::size_t k);

/// score_i = || mean of unit vectors from x_i to its k nearest neighbors ||.
/// Neighbors coinciding with x_i have no direction and are left out of the mean.
std::vector<EdgeInfo> edge_scores(const FeatureMatrix& X, std::size_t k);

/// One row per edge point: x_i - shift_scale * mean_knn_dist_i * direction_i.
/// With no edge point at the configured threshold, retries once at the 90th
/// percentile of edge scores.
FeatureMatrix generate_pseudo_ood(const FeatureMatrix& X, const ShiftConfig& config);

/// Inward mirror for every row: x_i + shift_scale * mean_knn_dist_i * direction_i.
FeatureMatrix generate_pseudo_targets(const FeatureMatrix& X, const ShiftConfig& config);

}  // namespace laood::pseudo_ood
