#include "laood/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "laood/error.hpp"
#include "laood/parallel.hpp"

namespace laood::kernel {

void KernelParams::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0)
    throw Error("kernel gamma must be a positive finite number, got " + std::to_string(gamma));
  if (gamma == 0.0 && !diagnostic)
    throw Error("kernel gamma == 0 is only allowed in diagnostic mode");
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

namespace {

void check_finite(std::span<const double> v) {
  for (double e : v)
    if (!std::isfinite(e)) throw Error("rbf: non-finite input value");
}

inline double rbf_unchecked(std::span<const double> x, std::span<const double> y, double gamma) {
  return std::exp(-gamma * squared_distance(x, y));
}

}  // namespace

double rbf(std::span<const double> x, std::span<const double> y, const KernelParams& params) {
  if (x.size() != y.size())
    throw DimensionError("rbf: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  params.validate();
  check_finite(x);
  check_finite(y);
  return rbf_unchecked(x, y, params.gamma);
}

Matrix gram(const FeatureMatrix& X, const KernelParams& params, GramMode mode) {
  const std::size_t n = X.rows();
  if (n == 0) throw Error("gram: empty feature matrix");
  params.validate();
  check_finite(X.data());

  Matrix G(n, n);
  std::vector<double> sq_norm;
  if (mode == GramMode::expanded) {
    sq_norm.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : X.row(i)) s += v * v;
      sq_norm[i] = s;
    }
  }

  parallel_for(n, [&](std::size_t i) {
    G(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double value;
      if (mode == GramMode::direct) {
        value = rbf_unchecked(X.row(i), X.row(j), params.gamma);
      } else {
        double dot = 0.0;
        auto xi = X.row(i);
        auto xj = X.row(j);
        for (std::size_t k = 0; k < xi.size(); ++k) dot += xi[k] * xj[k];
        const double d2 = std::max(0.0, sq_norm[i] + sq_norm[j] - 2.0 * dot);
        value = std::exp(-params.gamma * d2);
      }
      G(i, j) = value;
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) G(i, j) = G(j, i);
  return G;
}

}  // namespace laood::kernel
