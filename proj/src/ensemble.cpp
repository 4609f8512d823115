#include "laood/ensemble.hpp"

#include <set>
#include <string>

#include "laood/error.hpp"
#include "laood/parallel.hpp"

namespace laood::ensemble {

void DetectorEnsemble::validate() const {
  if (layers.empty()) throw Error("ensemble: no layers");
  std::set<std::string> names;
  for (const auto& l : layers) {
    if (!names.insert(l.name).second) throw Error("ensemble: duplicate layer name '" + l.name + "'");
    if (l.model.dim() != l.stats.dim())
      throw DimensionError("ensemble: layer '" + l.name + "' model dimension " + std::to_string(l.model.dim()) +
                           " != stats dimension " + std::to_string(l.stats.dim()));
  }
}

SamplePrediction combine_scores(std::vector<double> per_layer_scores, double delta) {
  if (per_layer_scores.empty()) throw Error("combine_scores: no layer scores");
  SamplePrediction p;
  p.per_layer_scores = std::move(per_layer_scores);
  p.final_score = p.per_layer_scores[0];
  for (std::size_t l = 0; l < p.per_layer_scores.size(); ++l) {
    const double s = p.per_layer_scores[l];
    p.confusion += s;
    if (s > p.final_score) {
      p.final_score = s;
      p.argmax_layer = l;
    }
  }
  p.is_ood = p.final_score > delta;
  return p;
}

SamplePrediction score_sample(const DetectorEnsemble& ens, std::span<const std::vector<double>> features) {
  if (features.size() != ens.size())
    throw DimensionError("score_sample: expected " + std::to_string(ens.size()) + " layer vectors, got " +
                         std::to_string(features.size()));
  std::vector<double> scores(ens.size());
  for (std::size_t l = 0; l < ens.size(); ++l) {
    const auto& layer = ens.layers[l];
    if (features[l].size() != layer.stats.dim())
      throw DimensionError("score_sample: layer '" + layer.name + "' expects dimension " +
                           std::to_string(layer.stats.dim()) + ", got " + std::to_string(features[l].size()));
    scores[l] = ocsvm::score(layer.model, preprocess::apply_stats(layer.stats, features[l]));
  }
  return combine_scores(std::move(scores), ens.delta);
}

DatasetPrediction score_dataset(const DetectorEnsemble& ens, std::span<const FeatureMatrix> matrices) {
  if (matrices.size() != ens.size())
    throw DimensionError("score_dataset: expected " + std::to_string(ens.size()) + " layer matrices, got " +
                         std::to_string(matrices.size()));
  const std::size_t n = matrices.empty() ? 0 : matrices[0].rows();
  for (std::size_t l = 0; l < matrices.size(); ++l) {
    if (matrices[l].rows() != n)
      throw DimensionError("score_dataset: layer '" + ens.layers[l].name + "' has " +
                           std::to_string(matrices[l].rows()) + " rows, expected " + std::to_string(n));
    if (n > 0 && matrices[l].cols() != ens.layers[l].stats.dim())
      throw DimensionError("score_dataset: layer '" + ens.layers[l].name + "' expects dimension " +
                           std::to_string(ens.layers[l].stats.dim()) + ", got " +
                           std::to_string(matrices[l].cols()));
  }

  std::vector<std::vector<double>> layer_scores(ens.size());
  for (std::size_t l = 0; l < ens.size(); ++l) {
    const auto Z = preprocess::apply_stats(ens.layers[l].stats, matrices[l]);
    layer_scores[l] = ocsvm::score_batch(ens.layers[l].model, Z);
  }

  DatasetPrediction out;
  out.samples.reserve(n);
  out.detections_per_layer.assign(ens.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(ens.size());
    for (std::size_t l = 0; l < ens.size(); ++l) s[l] = layer_scores[l][i];
    out.samples.push_back(combine_scores(std::move(s), ens.delta));
    if (out.samples.back().is_ood) ++out.detections_per_layer[out.samples.back().argmax_layer];
  }
  return out;
}

LayerBuild build_layer(const std::string& name, const FeatureMatrix& raw, const tuner::TuneSpec& tune,
                       const pseudo_ood::ShiftConfig& shift) {
  try {
    LayerBuild b;
    b.detector.name = name;
    b.detector.stats = preprocess::fit_stats(raw);
    const FeatureMatrix Z = preprocess::apply_stats(b.detector.stats, raw);
    const FeatureMatrix pseudo = pseudo_ood::generate_pseudo_ood(Z, shift);
    b.pseudo_count = pseudo.rows();
    if (tune.ind_side == tuner::InDSide::pseudo_targets) {
      const FeatureMatrix targets = pseudo_ood::generate_pseudo_targets(Z, shift);
      b.tuning = tuner::select_gamma(Z, pseudo, tune, &targets);
    } else if (tune.ind_side == tuner::InDSide::holdout && Z.rows() >= 5) {
      FeatureMatrix fit_rows(0, Z.cols()), held(0, Z.cols());
      for (std::size_t i = 0; i < Z.rows(); ++i) (i % 5 == 4 ? held : fit_rows).append_row(Z.row(i));
      b.tuning = tuner::select_gamma(fit_rows, pseudo, tune, &held);
    } else {
      b.tuning = tuner::select_gamma(Z, pseudo, tune);
    }

    ocsvm::OcsvmConfig cfg;
    cfg.nu = tune.nu;
    cfg.kernel.gamma = b.tuning.gamma;
    cfg.solver_tol = tune.solver_tol;
    b.detector.model = ocsvm::fit(Z, cfg);
    return b;
  } catch (const std::exception& e) {
    throw Error("layer '" + name + "': " + e.what());
  }
}

LayerDetector fit_layer(const std::string& name, const preprocess::StandardizeStats& stats, const FeatureMatrix& raw,
                        double nu, double gamma, double solver_tol) {
  try {
    ocsvm::OcsvmConfig cfg;
    cfg.nu = nu;
    cfg.kernel.gamma = gamma;
    cfg.solver_tol = solver_tol;
    return LayerDetector{name, stats, ocsvm::fit(preprocess::apply_stats(stats, raw), cfg)};
  } catch (const std::exception& e) {
    throw Error("layer '" + name + "': " + e.what());
  }
}

DetectorEnsemble build_ensemble(std::span<const LayerFeatures> layers, const tuner::TuneSpec& tune,
                                const pseudo_ood::ShiftConfig& shift, std::vector<tuner::TuneResult>* reports) {
  if (layers.empty()) throw Error("build_ensemble: no layers");
  for (const auto& l : layers)
    if (l.features.rows() != layers[0].features.rows())
      throw DimensionError("build_ensemble: layer '" + l.name + "' row count differs from layer '" +
                           layers[0].name + "'");

  DetectorEnsemble ens;
  for (const auto& l : layers) {
    LayerBuild b = build_layer(l.name, l.features, tune, shift);
    if (reports) reports->push_back(b.tuning);
    ens.layers.push_back(std::move(b.detector));
  }
  ens.validate();
  return ens;
}

}  // namespace laood::ensemble
