#include "laood/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>

#include "laood/parallel.hpp"

namespace laood::ocsvm {

void OcsvmConfig::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) throw Error("ocsvm: nu must lie in (0, 1], got " + std::to_string(nu));
  if (!(solver_tol > 0.0)) throw Error("ocsvm: solver_tol must be positive");
  kernel.validate();
}

std::vector<double> OcsvmModel::dense_alphas() const {
  std::vector<double> dense(n_train, 0.0);
  for (std::size_t k = 0; k < support_indices.size(); ++k) dense[support_indices[k]] = alphas[k];
  return dense;
}

NotConvergedError::NotConvergedError(OcsvmModel model, double violation)
    : Error("ocsvm: solver reached max_iter with KKT violation " + std::to_string(violation)),
      model_(std::move(model)),
      violation_(violation) {}

namespace {

// Kernel rows either from a materialized Gram matrix or computed on demand
// with a small least-recently-used cache.
class KernelRows {
 public:
  KernelRows(const FeatureMatrix& X, const kernel::KernelParams& params, std::size_t full_limit)
      : X_(X), gamma_(params.gamma), n_(X.rows()) {
    if (n_ <= full_limit) {
      full_ = kernel::gram(X, params);
    } else {
      capacity_ = std::max<std::size_t>(2, (std::size_t{256} << 20) / (n_ * sizeof(double)));
    }
  }

  std::span<const double> row(std::size_t i) {
    if (!full_.empty()) return full_.row(i);
    auto it = cache_.find(i);
    if (it != cache_.end()) {
      it->second.last_use = ++clock_;
      return it->second.values;
    }
    if (cache_.size() >= capacity_) {
      auto victim = std::min_element(cache_.begin(), cache_.end(), [](const auto& a, const auto& b) {
        return a.second.last_use < b.second.last_use;
      });
      cache_.erase(victim);
    }
    Entry e;
    e.values.resize(n_);
    for (std::size_t j = 0; j < n_; ++j)
      e.values[j] = j == i ? 1.0 : std::exp(-gamma_ * kernel::squared_distance(X_.row(i), X_.row(j)));
    e.last_use = ++clock_;
    return cache_.emplace(i, std::move(e)).first->second.values;
  }

 private:
  struct Entry {
    std::vector<double> values;
    std::uint64_t last_use = 0;
  };
  const FeatureMatrix& X_;
  double gamma_;
  std::size_t n_;
  Matrix full_;
  std::size_t capacity_ = 0;
  std::unordered_map<std::size_t, Entry> cache_;
  std::uint64_t clock_ = 0;
};

}  // namespace

DualSolution solve_dual(const FeatureMatrix& X, const OcsvmConfig& config) {
  config.validate();
  const std::size_t n = X.rows();
  if (n == 0) throw Error("ocsvm: empty training matrix");

  const double upper = 1.0 / (config.nu * static_cast<double>(n));
  const std::size_t max_iter = config.max_iter ? config.max_iter : 100 * n * n;
  KernelRows rows(X, config.kernel, config.full_gram_limit);

  DualSolution sol;
  sol.alphas.assign(n, 0.0);
  double remaining = 1.0;
  for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
    const double a = std::min(upper, remaining);
    sol.alphas[i] = a;
    remaining -= a;
  }
  if (remaining > 0.0) sol.alphas[n - 1] += remaining;  // rounding residue when nu == 1

  sol.gradient.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (sol.alphas[j] == 0.0) continue;
    auto kj = rows.row(j);
    for (std::size_t k = 0; k < n; ++k) sol.gradient[k] += sol.alphas[j] * kj[k];
  }

  auto& alpha = sol.alphas;
  auto& grad = sol.gradient;
  for (;;) {
    // i: coordinate allowed to grow with the smallest gradient.
    // j: coordinate allowed to shrink with the largest gradient.
    std::size_t i = n, j = n;
    double g_min = std::numeric_limits<double>::infinity();
    double g_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (alpha[k] < upper && grad[k] < g_min) {
        g_min = grad[k];
        i = k;
      }
      if (alpha[k] > 0.0 && grad[k] > g_max) {
        g_max = grad[k];
        j = k;
      }
    }
    sol.max_violation = (i == n || j == n) ? 0.0 : std::max(0.0, g_max - g_min);
    if (sol.max_violation <= config.solver_tol) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= max_iter) break;
    ++sol.iterations;

    auto ki = rows.row(i);
    auto kj = rows.row(j);
    double quad = ki[i] + kj[j] - 2.0 * ki[j];
    if (quad <= 0.0) quad = 1e-12;
    const double room_i = upper - alpha[i];
    const double room_j = alpha[j];
    double step = (g_max - g_min) / quad;
    if (step >= room_i && room_i <= room_j) {
      step = room_i;
      alpha[i] = upper;
      alpha[j] = room_j - step;
      if (room_i == room_j) alpha[j] = 0.0;
    } else if (step >= room_j) {
      step = room_j;
      alpha[i] += step;
      alpha[j] = 0.0;
    } else {
      alpha[i] += step;
      alpha[j] -= step;
    }
    for (std::size_t k = 0; k < n; ++k) grad[k] += step * (ki[k] - kj[k]);
  }

  double obj = 0.0;
  for (std::size_t k = 0; k < n; ++k) obj += alpha[k] * grad[k];
  sol.objective = 0.5 * obj;
  return sol;
}

RhoEstimate recover_rho(std::span<const double> alphas, const Matrix& support_vectors,
                        const kernel::KernelParams& kernel, double upper_bound) {
  if (alphas.empty()) throw Error("recover_rho: empty alpha vector");
  if (alphas.size() != support_vectors.rows())
    throw DimensionError("recover_rho: alpha count does not match support vector count");

  const std::size_t m = alphas.size();
  const double margin_cut = upper_bound * (1.0 - 1e-12);
  auto decision_sum = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      s += alphas[j] * kernel::rbf(support_vectors.row(j), support_vectors.row(i), kernel);
    return s;
  };

  RhoEstimate est;
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (alphas[i] > 0.0 && alphas[i] < margin_cut) {
      acc += decision_sum(i);
      ++est.margin_count;
    }
  }
  if (est.margin_count > 0) {
    est.rho = acc / static_cast<double>(est.margin_count);
    return est;
  }

  est.fallback = true;
  std::size_t used = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (alphas[i] <= 0.0) continue;
    acc += decision_sum(i);
    ++used;
  }
  if (used == 0) throw Error("recover_rho: no positive alpha");
  est.rho = acc / static_cast<double>(used);
  return est;
}

OcsvmModel fit(const FeatureMatrix& X, const OcsvmConfig& config) {
  DualSolution sol = solve_dual(X, config);

  OcsvmModel model;
  model.kernel = config.kernel;
  model.nu = config.nu;
  model.n_train = X.rows();
  for (std::size_t i = 0; i < sol.alphas.size(); ++i) {
    if (sol.alphas[i] > 0.0) {
      model.support_indices.push_back(i);
      model.alphas.push_back(sol.alphas[i]);
    }
  }
  model.support_vectors = X.select_rows(model.support_indices);
  const RhoEstimate rho = recover_rho(model.alphas, model.support_vectors, model.kernel, model.upper_bound());
  model.rho = rho.rho;
  model.rho_fallback = rho.fallback;
  model.dual_objective = sol.objective;
  model.max_violation = sol.max_violation;
  model.iterations = sol.iterations;

  if (!sol.converged) throw NotConvergedError(std::move(model), sol.max_violation);
  return model;
}

double score(const OcsvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim())
    throw DimensionError("ocsvm score: expected dimension " + std::to_string(model.dim()) + ", got " +
                         std::to_string(x.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < model.alphas.size(); ++i)
    s += model.alphas[i] * kernel::rbf(model.support_vectors.row(i), x, model.kernel);
  return model.rho - s;
}

std::vector<double> score_batch(const OcsvmModel& model, const FeatureMatrix& X) {
  std::vector<double> out(X.rows());
  if (X.rows() > 0 && X.cols() != model.dim())
    throw DimensionError("ocsvm score_batch: expected dimension " + std::to_string(model.dim()) +
                         ", got " + std::to_string(X.cols()));
  parallel_for(X.rows(), [&](std::size_t i) { out[i] = score(model, X.row(i)); });
  return out;
}

double dual_objective(std::span<const double> alphas, const FeatureMatrix& X,
                      const kernel::KernelParams& kernel) {
  if (alphas.size() != X.rows()) throw DimensionError("dual_objective: alpha count != rows");
  double s = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (alphas[i] == 0.0) continue;
    for (std::size_t j = 0; j < X.rows(); ++j)
      s += alphas[i] * alphas[j] * kernel::rbf(X.row(i), X.row(j), kernel);
  }
  return 0.5 * s;
}

}  // namespace laood::ocsvm
