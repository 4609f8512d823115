#pragma once

#include <optional>
#include <string>
#include <vector>

#include "laood/matrix.hpp"

namespace laood::tuner {

enum class Criterion { auroc, balanced_error };

Criterion parse_criterion(const std::string& name);
std::string to_string(Criterion c);

/// Which in-distribution sample the criterion compares against the pseudo-OODs.
/// `train` scores the fitted training rows themselves; `pseudo_targets` scores
/// points shifted inward from them; `holdout` fits on 4 of every 5 rows and
/// scores the fifth.
enum class InDSide { train, pseudo_targets, holdout };

InDSide parse_ind_side(const std::string& name);
std::string to_string(InDSide side);

/// Default grid searched for the RBF width.
std::vector<double> default_gamma_grid();

struct TuneSpec {
  double nu = 0.001;
  std::vector<double> gamma_grid = default_gamma_grid();
  Criterion criterion = Criterion::auroc;
  double solver_tol = 1e-6;
  InDSide ind_side = InDSide::train;

  /// Grid must be nonempty, strictly increasing and positive.
  void validate() const;
};

struct GammaEntry {
  double gamma = 0.0;
  std::optional<double> value;  // criterion value; empty when the fit was skipped
  std::string skip_reason;
};

struct TuneResult {
  double gamma = 0.0;
  std::vector<GammaEntry> entries;  // one per grid element, grid order
};

/// Fits one detector per grid gamma on X_train and picks the gamma whose
/// scores best separate X_pseudo (positive class) from X_train. AUROC is
/// maximized, balanced error (at threshold 0) minimized. Ties go to the
/// smaller gamma. Failed fits are skipped and reported. When `X_ind_eval` is
/// given it replaces X_train as the scored in-distribution side.
TuneResult select_gamma(const FeatureMatrix& X_train, const FeatureMatrix& X_pseudo, const TuneSpec& spec,
                        const FeatureMatrix* X_ind_eval = nullptr);

}  // namespace laood::tuner
