#include "laood/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

#include "laood/error.hpp"

namespace laood::metrics {

namespace {

void require_nonempty(std::span<const double> ind, std::span<const double> ood, const char* who) {
  if (ind.empty() || ood.empty()) throw Error(std::string(who) + ": both score sets must be nonempty");
}

struct Labeled {
  double score;
  bool ood;
};

// All scores sorted descending.
std::vector<Labeled> merged_descending(std::span<const double> ind, std::span<const double> ood) {
  std::vector<Labeled> all;
  all.reserve(ind.size() + ood.size());
  for (double s : ind) all.push_back({s, false});
  for (double s : ood) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Labeled& a, const Labeled& b) { return a.score > b.score; });
  return all;
}

// Calls visit(tp, fp) once per distinct score, cumulative counts of items >= that score.
template <class Visit>
void sweep(const std::vector<Labeled>& desc, Visit visit) {
  std::size_t tp = 0, fp = 0, k = 0;
  while (k < desc.size()) {
    const double s = desc[k].score;
    std::size_t dtp = 0, dfp = 0;
    while (k < desc.size() && desc[k].score == s) {
      (desc[k].ood ? dtp : dfp)++;
      ++k;
    }
    tp += dtp;
    fp += dfp;
    visit(tp, fp, dtp, dfp);
  }
}

}  // namespace

double auroc(std::span<const double> ind, std::span<const double> ood) {
  require_nonempty(ind, ood, "auroc");
  // Each tie group contributes dtp * (InD strictly below) + 0.5 * dtp * dfp.
  const auto desc = merged_descending(ind, ood);
  const double n_ind = static_cast<double>(ind.size());
  double wins = 0.0;
  sweep(desc, [&](std::size_t, std::size_t fp, std::size_t dtp, std::size_t dfp) {
    const double below = n_ind - static_cast<double>(fp);
    wins += static_cast<double>(dtp) * below + 0.5 * static_cast<double>(dtp) * static_cast<double>(dfp);
  });
  return wins / (n_ind * static_cast<double>(ood.size()));
}

double aupr(std::span<const double> ind, std::span<const double> ood) {
  require_nonempty(ind, ood, "aupr");
  const auto desc = merged_descending(ind, ood);
  double ap = 0.0;
  sweep(desc, [&](std::size_t tp, std::size_t fp, std::size_t dtp, std::size_t) {
    if (dtp == 0) return;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += precision * static_cast<double>(dtp);
  });
  return ap / static_cast<double>(ood.size());
}

double fpr_at_tpr(std::span<const double> ind, std::span<const double> ood, double tpr_target) {
  require_nonempty(ind, ood, "fpr_at_tpr");
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw Error("fpr_at_tpr: target must lie in (0, 1]");
  const auto desc = merged_descending(ind, ood);
  const double n_ind = static_cast<double>(ind.size());
  const double n_ood = static_cast<double>(ood.size());
  // FPR only grows as the threshold drops, so the first qualifying step is the minimum.
  double best = 1.0;
  bool found = false;
  sweep(desc, [&](std::size_t tp, std::size_t fp, std::size_t, std::size_t) {
    if (found) return;
    if (static_cast<double>(tp) / n_ood >= tpr_target) {
      best = static_cast<double>(fp) / n_ind;
      found = true;
    }
  });
  return best;
}

std::string EvalReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "auroc=%.9g\naupr=%.9g\nfpr_at_95_tpr=%.9g\nn_ind=%zu\nn_ood=%zu\n", auroc,
                aupr, fpr_at_95_tpr, n_ind, n_ood);
  return buf;
}

EvalReport evaluate(std::span<const double> ind, std::span<const double> ood, double tpr_target) {
  EvalReport r;
  r.auroc = auroc(ind, ood);
  r.aupr = aupr(ind, ood);
  r.fpr_at_95_tpr = fpr_at_tpr(ind, ood, tpr_target);
  r.n_ind = ind.size();
  r.n_ood = ood.size();
  return r;
}

}  // namespace laood::metrics
