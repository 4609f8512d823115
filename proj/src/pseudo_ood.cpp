#include "laood/pseudo_ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "laood/error.hpp"
#include "laood/kernel.hpp"
#include "laood/parallel.hpp"

namespace laood::pseudo_ood {

std::size_t ShiftConfig::neighbors_for(std::size_t n) const {
  if (k_neighbors != 0) return k_neighbors;
  return n == 0 ? 0 : std::min<std::size_t>(20, n - 1);
}

void ShiftConfig::validate() const {
  if (!(edge_threshold > 0.0 && edge_threshold <= 1.0)) throw Error("shift: edge_threshold must lie in (0, 1]");
  if (!(shift_scale > 0.0)) throw Error("shift: shift_scale must be positive");
}

std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& X, std::size_t i, std::size_t k) {
  const std::size_t n = X.rows();
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dist.emplace_back(kernel::squared_distance(X.row(i), X.row(j)), j);
  // pair ordering breaks distance ties by index
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> idx(k);
  for (std::size_t m = 0; m < k; ++m) idx[m] = dist[m].second;
  return idx;
}

std::vector<EdgeInfo> edge_scores(const FeatureMatrix& X, std::size_t k) {
  const std::size_t n = X.rows(), d = X.cols();
  if (k < 1 || k >= n)
    throw Error("edge_scores: need 1 <= k < n, got k=" + std::to_string(k) + " n=" + std::to_string(n));

  std::vector<EdgeInfo> out(n);
  parallel_for(n, [&](std::size_t i) {
    EdgeInfo& e = out[i];
    e.direction.assign(d, 0.0);
    double dist_sum = 0.0;
    for (std::size_t j : nearest_neighbors(X, i, k)) {
      const double dist = std::sqrt(kernel::squared_distance(X.row(i), X.row(j)));
      dist_sum += dist;
      if (dist == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) e.direction[c] += (X(j, c) - X(i, c)) / dist;
      ++e.neighbors_used;
    }
    e.mean_neighbor_distance = dist_sum / static_cast<double>(k);
    if (e.neighbors_used == 0) {
      e.degenerate = true;
      return;
    }
    double norm = 0.0;
    for (double& v : e.direction) {
      v /= static_cast<double>(e.neighbors_used);
      norm += v * v;
    }
    e.score = std::min(1.0, std::sqrt(norm));
    if (norm == 0.0) {
      e.degenerate = true;
      return;
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (double& v : e.direction) v *= inv;
  });
  return out;
}

namespace {

// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FeatureMatrix shift_rows(const FeatureMatrix& X, const std::vector<EdgeInfo>& edges, double threshold,
                         double signed_scale) {
  FeatureMatrix out(0, X.cols());
  std::vector<double> row(X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const EdgeInfo& e = edges[i];
    if (e.degenerate || e.score < threshold) continue;
    const double step = signed_scale * e.mean_neighbor_distance;
    for (std::size_t c = 0; c < X.cols(); ++c) row[c] = X(i, c) + step * e.direction[c];
    out.append_row(row);
  }
  return out;
}

}  // namespace

FeatureMatrix generate_pseudo_ood(const FeatureMatrix& X, const ShiftConfig& config) {
  config.validate();
  const std::size_t k = config.neighbors_for(X.rows());
  const auto edges = edge_scores(X, k);

  FeatureMatrix out = shift_rows(X, edges, config.edge_threshold, -config.shift_scale);
  if (out.rows() > 0) return out;

  std::vector<double> scores(edges.size());
  std::transform(edges.begin(), edges.end(), scores.begin(), [](const EdgeInfo& e) { return e.score; });
  const double relaxed = percentile(std::move(scores), 90.0);
  out = shift_rows(X, edges, relaxed, -config.shift_scale);
  if (out.rows() == 0) throw Error("generate_pseudo_ood: no edge points found");
  return out;
}

FeatureMatrix generate_pseudo_targets(const FeatureMatrix& X, const ShiftConfig& config) {
  config.validate();
  const std::size_t k = config.neighbors_for(X.rows());
  const auto edges = edge_scores(X, k);
  FeatureMatrix out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const EdgeInfo& e = edges[i];
    const double step = e.degenerate ? 0.0 : config.shift_scale * e.mean_neighbor_distance;
    for (std::size_t c = 0; c < X.cols(); ++c) out(i, c) = X(i, c) + step * e.direction[c];
  }
  return out;
}

}  // namespace laood::pseudo_ood
