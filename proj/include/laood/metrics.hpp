#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace laood::metrics {

// OOD is the positive class throughout: higher score = more OOD.

/// P(ood score > ind score) with ties counted 1/2 (Mann-Whitney).
double auroc(std::span<const double> scores_ind, std::span<const double> scores_ood);

/// Average precision from a descending-score sweep. Tied scores form one
/// threshold step.
double aupr(std::span<const double> scores_ind, std::span<const double> scores_ood);

/// Smallest FPR over thresholds t (positive iff score >= t, t ranging over
/// the distinct scores and +inf) whose TPR reaches tpr_target.
double fpr_at_tpr(std::span<const double> scores_ind, std::span<const double> scores_ood,
                  double tpr_target = 0.95);

struct EvalReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr_at_95_tpr = 0.0;
  std::size_t n_ind = 0;
  std::size_t n_ood = 0;

  /// Flat "key=value" lines: auroc, aupr, fpr_at_95_tpr, n_ind, n_ood.
  std::string to_text() const;
};

EvalReport evaluate(std::span<const double> scores_ind, std::span<const double> scores_ood,
                    double tpr_target = 0.95);

}  // namespace laood::metrics
