#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "laood/error.hpp"
#include "laood/kernel.hpp"
#include "laood/matrix.hpp"

namespace laood::ocsvm {

struct OcsvmConfig {
  double nu = 0.001;  // upper bound on training-error fraction, in (0, 1]
  kernel::KernelParams kernel;
  double solver_tol = 1e-6;  // max KKT violation at exit
  std::size_t max_iter = 0;  // 0 selects 100 * n^2
  std::size_t full_gram_limit = 4096;  // above this n, kernel rows are computed on demand

  void validate() const;
};

/// Dense solution of the one-class dual over all n training rows.
struct DualSolution {
  std::vector<double> alphas;
  std::vector<double> gradient;  // K * alpha
  double objective = 0.0;        // 0.5 * alpha' K alpha
  double max_violation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Trained one-class detector. Immutable after fit; safe to share across threads.
struct OcsvmModel {
  Matrix support_vectors;  // rows with alpha > 0, in training order
  std::vector<double> alphas;
  double rho = 0.0;
  kernel::KernelParams kernel;
  double nu = 0.0;
  std::size_t n_train = 0;

  // Training-time diagnostics. Not persisted.
  std::vector<std::size_t> support_indices;
  bool rho_fallback = false;  // no strict margin SV existed
  double dual_objective = 0.0;
  double max_violation = 0.0;
  std::size_t iterations = 0;

  std::size_t dim() const { return support_vectors.cols(); }
  double upper_bound() const { return 1.0 / (nu * static_cast<double>(n_train)); }

  /// Alphas scattered back to all n_train training positions (zeros elsewhere).
  std::vector<double> dense_alphas() const;
};

/// Raised when the solver hits max_iter first. Carries the usable model.
class NotConvergedError : public Error {
 public:
  NotConvergedError(OcsvmModel model, double violation);
  const OcsvmModel& model() const { return model_; }
  double violation() const { return violation_; }

 private:
  OcsvmModel model_;
  double violation_;
};

/// Minimizes 0.5 a'Ka s.t. 0 <= a_i <= 1/(nu n), sum a = 1 with pairwise (SMO)
/// updates. Every step moves mass between two coordinates, so the simplex
/// constraint holds throughout. Working pair = maximal KKT violator, lowest
/// index on ties.
DualSolution solve_dual(const FeatureMatrix& X, const OcsvmConfig& config);

struct RhoEstimate {
  double rho = 0.0;
  std::size_t margin_count = 0;
  bool fallback = false;
};

/// rho = mean over margin SVs i (0 < a_i < upper_bound) of sum_j a_j k(x_j, x_i).
/// With no margin SV every support vector is averaged instead and `fallback` is set.
RhoEstimate recover_rho(std::span<const double> alphas, const Matrix& support_vectors,
                        const kernel::KernelParams& kernel, double upper_bound);

/// Trains a detector on standardized features. Throws NotConvergedError when
/// the solver stops on max_iter.
OcsvmModel fit(const FeatureMatrix& X, const OcsvmConfig& config);

/// C(x) = rho - sum_i a_i k(sv_i, x). Positive means outside the learned support.
double score(const OcsvmModel& model, std::span<const double> x);

std::vector<double> score_batch(const OcsvmModel& model, const FeatureMatrix& X);

/// 0.5 * sum_ij a_i a_j k(x_i, x_j) evaluated directly.
double dual_objective(std::span<const double> alphas, const FeatureMatrix& X,
                      const kernel::KernelParams& kernel);

}  // namespace laood::ocsvm
