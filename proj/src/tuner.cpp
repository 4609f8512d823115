#include "laood/tuner.hpp"

#include <string>

#include "laood/error.hpp"
#include "laood/metrics.hpp"
#include "laood/ocsvm.hpp"
#include "laood/parallel.hpp"

namespace laood::tuner {

Criterion parse_criterion(const std::string& name) {
  if (name == "auroc") return Criterion::auroc;
  if (name == "balanced_error") return Criterion::balanced_error;
  throw Error("unknown tuning criterion '" + name + "' (expected auroc or balanced_error)");
}

std::string to_string(Criterion c) { return c == Criterion::auroc ? "auroc" : "balanced_error"; }

InDSide parse_ind_side(const std::string& name) {
  if (name == "train") return InDSide::train;
  if (name == "pseudo_targets") return InDSide::pseudo_targets;
  if (name == "holdout") return InDSide::holdout;
  throw Error("unknown tuning InD side '" + name + "' (expected train, pseudo_targets or holdout)");
}

std::string to_string(InDSide side) {
  switch (side) {
    case InDSide::train: return "train";
    case InDSide::pseudo_targets: return "pseudo_targets";
    case InDSide::holdout: return "holdout";
  }
  return "unknown";
}

std::vector<double> default_gamma_grid() {
  return {0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0};
}

void TuneSpec::validate() const {
  if (gamma_grid.empty()) throw Error("tune: gamma grid is empty");
  for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
    if (!(gamma_grid[i] > 0.0)) throw Error("tune: gamma grid values must be positive");
    if (i > 0 && !(gamma_grid[i] > gamma_grid[i - 1])) throw Error("tune: gamma grid must be strictly increasing");
  }
  if (!(nu > 0.0 && nu <= 1.0)) throw Error("tune: nu must lie in (0, 1]");
}

namespace {

double balanced_error(const std::vector<double>& ind, const std::vector<double>& ood) {
  std::size_t false_alarm = 0, miss = 0;
  for (double s : ind) false_alarm += s > 0.0;
  for (double s : ood) miss += s <= 0.0;
  return 0.5 * (static_cast<double>(false_alarm) / static_cast<double>(ind.size()) +
                static_cast<double>(miss) / static_cast<double>(ood.size()));
}

}  // namespace

TuneResult select_gamma(const FeatureMatrix& X_train, const FeatureMatrix& X_pseudo, const TuneSpec& spec,
                        const FeatureMatrix* X_ind_eval) {
  spec.validate();
  if (X_train.empty() || X_pseudo.empty()) throw Error("tune: training and pseudo-OOD sets must be nonempty");
  if (X_train.cols() != X_pseudo.cols()) throw DimensionError("tune: training and pseudo-OOD dimensions differ");
  const FeatureMatrix& X_ind = X_ind_eval ? *X_ind_eval : X_train;
  if (X_ind.empty() || X_ind.cols() != X_train.cols())
    throw DimensionError("tune: in-distribution evaluation set is empty or has the wrong dimension");

  TuneResult result;
  result.entries.resize(spec.gamma_grid.size());
  parallel_for(spec.gamma_grid.size(), [&](std::size_t g) {
    GammaEntry& entry = result.entries[g];
    entry.gamma = spec.gamma_grid[g];
    ocsvm::OcsvmConfig cfg;
    cfg.nu = spec.nu;
    cfg.kernel.gamma = entry.gamma;
    cfg.solver_tol = spec.solver_tol;
    try {
      const auto model = ocsvm::fit(X_train, cfg);
      const auto s_ind = ocsvm::score_batch(model, X_ind);
      const auto s_ood = ocsvm::score_batch(model, X_pseudo);
      entry.value = spec.criterion == Criterion::auroc ? metrics::auroc(s_ind, s_ood) : balanced_error(s_ind, s_ood);
    } catch (const std::exception& e) {
      entry.skip_reason = e.what();
    }
  });

  bool found = false;
  double best = 0.0;
  for (const auto& entry : result.entries) {
    if (!entry.value) continue;
    const double v = *entry.value;
    const bool better = spec.criterion == Criterion::auroc ? v > best : v < best;
    if (!found || better) {
      best = v;
      result.gamma = entry.gamma;
      found = true;
    }
  }
  if (!found) throw Error("tune: every gamma in the grid failed to fit (first: " + result.entries.front().skip_reason + ")");
  return result;
}

}  // namespace laood::tuner
