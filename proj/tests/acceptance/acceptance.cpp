// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "laood/backbone.hpp"
#include "laood/cli.hpp"
#include "laood/ensemble.hpp"
#include "laood/io.hpp"
#include "laood/metrics.hpp"
#include "laood/ocsvm.hpp"
#include "laood/synthetic.hpp"
#include "laood/tuner.hpp"
#include "support/nets.hpp"
#include "support/oracles.hpp"

using namespace laood;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0.0 && secs >= time_limit_s) {
    o.pass = false;
    o.detail += "; over time limit " + fmt("%.0f s", time_limit_s);
  }
  std::printf("%s  %-28s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

ocsvm::OcsvmConfig svm(double nu, double gamma) {
  ocsvm::OcsvmConfig c;
  c.nu = nu;
  c.kernel.gamma = gamma;
  return c;
}

std::vector<ocsvm::OcsvmModel> fixed_models;  // collected for the margin check

std::vector<ensemble::LayerFeatures> named(const std::vector<Matrix>& mats) {
  std::vector<ensemble::LayerFeatures> out;
  for (std::size_t l = 0; l < mats.size(); ++l) out.push_back({"layer" + std::to_string(l + 1), mats[l]});
  return out;
}

std::vector<double> column(const ensemble::DatasetPrediction& p, std::size_t layer) {
  std::vector<double> v;
  for (const auto& s : p.samples) v.push_back(s.per_layer_scores[layer]);
  return v;
}

std::vector<double> finals(const ensemble::DatasetPrediction& p) {
  std::vector<double> v;
  for (const auto& s : p.samples) v.push_back(s.final_score);
  return v;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Outcome qp_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const std::size_t n = 3 + (seed - 1) % 6;
    const double nu = 0.25 + 0.15 * static_cast<double>(seed % 5);
    const double gamma = 0.2 + 0.4 * static_cast<double>(seed % 4);
    const auto X = oracle::gaussian_matrix(n, 2, 1000 + seed);
    const auto m = ocsvm::fit(X, svm(nu, gamma));
    const auto ref = oracle::solve_qp(X, gamma, nu);
    worst = std::max(worst, std::abs(ocsvm::dual_objective(m.alphas, m.support_vectors, m.kernel) - ref.objective));
    fixed_models.push_back(m);
  }
  return {worst <= 1e-6, "25 instances, max |objective gap| = " + fmt("%.3g", worst) + " (tol 1e-6)"};
}

Outcome nu_property() {
  const double n = 500.0;
  std::size_t ok = 0, total = 0;
  double worst_out = -1.0, worst_sv = -1.0;
  for (double nu : {0.05, 0.1, 0.2}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto grid = tuner::default_gamma_grid();
      const double gamma = grid[(seed - 1) % grid.size()];
      const auto X = oracle::gaussian_matrix(500, 2, 2000 + seed);
      const auto cfg = svm(nu, gamma);
      const auto m = ocsvm::fit(X, cfg);
      const auto s = ocsvm::score_batch(m, X);
      const double out_frac =
          static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v > cfg.solver_tol; })) / n;
      const double sv_frac = static_cast<double>(m.alphas.size()) / n;
      worst_out = std::max(worst_out, out_frac - (nu + 2.0 / n));
      worst_sv = std::max(worst_sv, (nu - 2.0 / n) - sv_frac);
      ok += out_frac <= nu + 2.0 / n && sv_frac >= nu - 2.0 / n;
      ++total;
      if (seed <= 3) fixed_models.push_back(m);
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " (nu, seed) runs hold; worst outlier excess " +
                           fmt("%.4f", worst_out) + ", worst SV shortfall " + fmt("%.4f", worst_sv)};
}

Outcome margin_scores() {
  double worst = 0.0;
  std::size_t count = 0;
  for (const auto& m : fixed_models) {
    for (std::size_t i = 0; i < m.alphas.size(); ++i) {
      if (m.alphas[i] >= m.upper_bound()) continue;
      worst = std::max(worst, std::abs(ocsvm::score(m, m.support_vectors.row(i))));
      ++count;
    }
  }
  return {count > 0 && worst <= 1e-5, std::to_string(count) + " margin SVs over " + std::to_string(fixed_models.size()) +
                                          " models, max |C(x)| = " + fmt("%.3g", worst) + " (tol 1e-5)"};
}

Outcome gradient_check() {
  const std::vector<std::vector<std::size_t>> shapes{{3, 5, 4, 2}, {4, 6, 3}, {2, 7, 6, 3}, {5, 4, 4, 4, 2}, {3, 10, 8, 3}};
  double worst = 0.0;
  std::size_t params = 0;
  Rng rng(31);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto bb = backbone::ToyBackbone::random(shapes[k], 40 + k);
    params = std::max(params, bb.num_parameters());
    const auto X = oracle::gaussian_matrix(6, shapes[k][0], 50 + k);
    const auto y = nets::random_labels(6, shapes[k].back(), rng);
    const auto regs = nets::random_regs(bb, X, 0.5, 60 + k);
    for (double lambda : {0.0, 0.1, 1.0})
      worst = std::max(worst, nets::finite_difference_check(bb, X, y, regs, lambda).max_rel_error);
  }
  return {worst <= 1e-4 && params <= 200, "5 nets (max " + std::to_string(params) +
                                              " params) x lambda {0, 0.1, 1}, max rel err = " + fmt("%.3g", worst) +
                                              " (tol 1e-4)"};
}

Outcome alternating() {
  Matrix X;
  std::vector<int> y;
  nets::two_blobs(200, 4, 71, X, y);
  backbone::JointConfig cfg;
  cfg.lambda = 0.1;
  cfg.outer_iters = 3;
  cfg.inner_epochs = 5;
  cfg.learning_rate = 0.02;
  cfg.pretrain_epochs = 200;
  cfg.convergence_tol = 1e-12;
  cfg.seed = 7;
  cfg.tune.nu = 0.1;
  const auto res = backbone::train_alternating(backbone::ToyBackbone::random({4, 8, 6, 2}, 72), X, y, cfg);
  std::vector<double> obj;
  for (const auto& r : res.trace)
    if (r.step == "II") obj.push_back(r.joint_objective);
  double worst_rise = -1e300;
  for (std::size_t k = 1; k < obj.size(); ++k) worst_rise = std::max(worst_rise, obj[k] - obj[k - 1]);
  const bool monotone = obj.size() == 3 && worst_rise <= 1e-6;
  const double drop = 100.0 * (res.baseline_accuracy - res.final_accuracy);
  std::string detail = "Step II objectives";
  for (double v : obj) detail += " " + fmt("%.9g", v);
  detail += ", max rise " + fmt("%.3g", worst_rise) + "; accuracy " + fmt("%.1f", 100 * res.baseline_accuracy) +
            " -> " + fmt("%.1f", 100 * res.final_accuracy);
  return {monotone && drop <= 5.0, detail};
}

Outcome metric_oracles() {
  Rng rng(81);
  double worst = 0.0;
  std::size_t fpr_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> ind(1 + rng.index(50)), ood(1 + rng.index(50));
    for (double& v : ind) v = std::round(8.0 * rng.normal()) / 8.0;
    for (double& v : ood) v = std::round(8.0 * rng.normal(0.7, 1.0)) / 8.0;
    worst = std::max(worst, std::abs(metrics::auroc(ind, ood) - oracle::auroc_pairs(ind, ood)));
    fpr_mismatch += metrics::fpr_at_tpr(ind, ood, 0.95) != oracle::fpr_at_tpr_scan(ind, ood, 0.95);
  }
  return {worst <= 1e-9 && fpr_mismatch == 0, "100 instances, max auroc gap " + fmt("%.3g", worst) +
                                                  ", fpr mismatches " + std::to_string(fpr_mismatch)};
}

Outcome dominance() {
  const auto data = io::make_synthetic(io::SynthSpec{11, 1000, 1000, 8, io::OodKind::layerwise_mixed});
  const auto ens = ensemble::build_ensemble(named(data.train), tuner::TuneSpec{}, pseudo_ood::ShiftConfig{});
  const auto pi = ensemble::score_dataset(ens, data.test_ind), po = ensemble::score_dataset(ens, data.test_ood);
  const double ens_auroc = metrics::auroc(finals(pi), finals(po));
  double best_single = 0.0, worst_margin = 1e300;
  std::string detail = "ensemble " + fmt("%.4f", ens_auroc);
  for (std::size_t l = 0; l < 2; ++l) {
    const double a = metrics::auroc(column(pi, l), column(po, l));
    best_single = std::max(best_single, a);
    worst_margin = std::min(worst_margin, ens_auroc - a);
    detail += ", layer" + std::to_string(l + 1) + " " + fmt("%.4f", a);
  }
  const bool pass = ens_auroc >= best_single - 0.02 && worst_margin >= 0.05;
  return {pass, detail + " (gamma " + fmt("%g", ens.layers[0].model.kernel.gamma) + "/" +
                    fmt("%g", ens.layers[1].model.kernel.gamma) + ")"};
}

// Own-group vs other-group separability of each layer on the mixed set.
void separability_note() {
  const auto data = io::make_synthetic(io::SynthSpec{11, 1000, 1000, 8, io::OodKind::layerwise_mixed});
  const auto ens = ensemble::build_ensemble(named(data.train), tuner::TuneSpec{}, pseudo_ood::ShiftConfig{});
  const auto pi = ensemble::score_dataset(ens, data.test_ind), po = ensemble::score_dataset(ens, data.test_ood);
  std::string line;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto ind = column(pi, l), ood = column(po, l);
    std::vector<double> own, other;
    for (std::size_t i = 0; i < ood.size(); ++i)
      (static_cast<std::size_t>(data.ood_groups[i]) == l ? own : other).push_back(ood[i]);
    line += " layer" + std::to_string(l + 1) + " own " + fmt("%.4f", metrics::auroc(ind, own)) + " other " +
            fmt("%.4f", metrics::auroc(ind, other)) + ";";
  }
  std::printf("INFO  %-28s%s\n", "mixed per-group AUROC", line.c_str());
}

struct ConfusionStats {
  double negative_fraction = 0.0, mean_ind = 0.0, mean_ood = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0;
};

ConfusionStats confusion_stats(const tuner::TuneSpec& spec) {
  const auto data = io::make_synthetic(io::SynthSpec{7, 1000, 1000, 8, io::OodKind::far_gaussian});
  const auto ens = ensemble::build_ensemble(named(data.train), spec, pseudo_ood::ShiftConfig{});
  const auto pi = ensemble::score_dataset(ens, data.test_ind), po = ensemble::score_dataset(ens, data.test_ood);
  ConfusionStats s;
  std::vector<double> ci, co;
  for (const auto& p : pi.samples) ci.push_back(p.confusion);
  for (const auto& p : po.samples) co.push_back(p.confusion);
  s.negative_fraction =
      static_cast<double>(std::count_if(ci.begin(), ci.end(), [](double v) { return v < 0.0; })) / ci.size();
  s.mean_ind = mean(ci);
  s.mean_ood = mean(co);
  s.gamma1 = ens.layers[0].model.kernel.gamma;
  s.gamma2 = ens.layers[1].model.kernel.gamma;
  return s;
}

std::string describe(const ConfusionStats& s) {
  return fmt("%.1f%%", 100 * s.negative_fraction) + " InD negative, mean InD " + fmt("%.4f", s.mean_ind) +
         " vs OOD " + fmt("%.4f", s.mean_ood) + " (gamma " + fmt("%g", s.gamma1) + "/" + fmt("%g", s.gamma2) + ")";
}

Outcome confusion() {
  tuner::TuneSpec spec;
  spec.criterion = tuner::Criterion::balanced_error;
  spec.ind_side = tuner::InDSide::holdout;
  const auto s = confusion_stats(spec);
  return {s.negative_fraction >= 0.95 && s.mean_ind < s.mean_ood,
          "balanced_error on holdout: " + describe(s)};
}

void confusion_default_note() {
  std::printf("INFO  %-28s default tuning (auroc on train): %s\n", "confusion, default tuning",
              describe(confusion_stats(tuner::TuneSpec{})).c_str());
}

int cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"laood"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out, err;
  const int code = cli::run(full, out, err);
  if (code != 0) throw std::runtime_error("laood " + args.front() + " failed: " + err.str());
  return code;
}

void pipeline(const std::filesystem::path& dir) {
  const std::string d = dir.string();
  cli({"gen-synth", "--seed", "7", "--ood-kind", "far_gaussian", "--out", d});
  cli({"fit", "--train", d + "/train.json", "--out", d + "/model.json"});
  cli({"score", "--model", d + "/model.json", "--features", d + "/test_ind.json", "--out", d + "/ind.csv"});
  cli({"score", "--model", d + "/model.json", "--features", d + "/test_ood.json", "--out", d + "/ood.csv"});
}

Outcome determinism() {
  oracle::TempDir a("acc_a"), b("acc_b");
  pipeline(a.path());
  pipeline(b.path());
  std::size_t differing = 0;
  for (const char* f : {"model.json", "ind.csv", "ood.csv", "train_layer1.laod", "test_ood_layer2.laod"})
    differing += io::read_text(a / f) != io::read_text(b / f);

  // Round trip: scores from the fitted ensemble in memory vs after save/load.
  const auto ds = io::load_dataset(a / "train.json");
  const auto ens = ensemble::build_ensemble(ds.layers, tuner::TuneSpec{}, pseudo_ood::ShiftConfig{});
  const bool same_file = io::model_to_json(ens) == io::read_text(a / "model.json");
  io::save_model(a / "again.json", ens);
  const auto loaded = io::load_model(a / "again.json");
  std::size_t changed = 0, compared = 0;
  for (const char* split : {"test_ind.json", "test_ood.json"}) {
    const auto mats = io::load_dataset(a / split).matrices();
    const auto p = ensemble::score_dataset(ens, mats), q = ensemble::score_dataset(loaded, mats);
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
      changed += p.samples[i].per_layer_scores != q.samples[i].per_layer_scores;
      changed += p.samples[i].final_score != q.samples[i].final_score;
      ++compared;
    }
  }
  return {differing == 0 && changed == 0 && same_file,
          std::to_string(differing) + " differing artifacts across two seed-7 runs; " + std::to_string(changed) +
              " changed scores over " + std::to_string(compared) + " samples after save/load"};
}

}  // namespace

int main() {
  criterion("QP oracle equivalence", 5.0, qp_oracle);
  criterion("nu-property", 30.0, nu_property);
  criterion("margin SV zero score", 0.0, margin_scores);
  criterion("gradient check", 60.0, gradient_check);
  criterion("alternating optimization", 0.0, alternating);
  criterion("metric oracles", 0.0, metric_oracles);
  criterion("ensemble dominance", 0.0, dominance);
  separability_note();
  criterion("confusion score", 0.0, confusion);
  confusion_default_note();
  criterion("determinism & persistence", 0.0, determinism);
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
