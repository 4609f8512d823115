#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "laood/matrix.hpp"
#include "laood/ocsvm.hpp"
#include "laood/preprocess.hpp"
#include "laood/pseudo_ood.hpp"
#include "laood/tuner.hpp"

namespace laood::ensemble {

struct LayerDetector {
  std::string name;
  preprocess::StandardizeStats stats;
  ocsvm::OcsvmModel model;
};

/// One detector per tapped layer, combined by taking the maximum score.
/// A sample is OOD when that maximum exceeds `delta`.
struct DetectorEnsemble {
  std::vector<LayerDetector> layers;
  double delta = 0.0;

  std::size_t size() const { return layers.size(); }
  /// Nonempty, unique names, model dimension == stats dimension.
  void validate() const;
};

struct SamplePrediction {
  std::vector<double> per_layer_scores;
  double final_score = 0.0;
  std::size_t argmax_layer = 0;  // 0-based; earliest layer wins ties
  double confusion = 0.0;        // sum of per-layer scores
  bool is_ood = false;
};

/// The max-score policy on already computed per-layer scores.
SamplePrediction combine_scores(std::vector<double> per_layer_scores, double delta);

/// Scores raw (unstandardized) per-layer features of one sample.
SamplePrediction score_sample(const DetectorEnsemble& ens, std::span<const std::vector<double>> per_layer_features);

struct DatasetPrediction {
  std::vector<SamplePrediction> samples;
  /// Predicted-OOD rows attributed to their argmax layer.
  std::vector<std::size_t> detections_per_layer;
};

DatasetPrediction score_dataset(const DetectorEnsemble& ens, std::span<const FeatureMatrix> per_layer_matrices);

struct LayerFeatures {
  std::string name;
  FeatureMatrix features;
};

struct LayerBuild {
  LayerDetector detector;
  tuner::TuneResult tuning;
  std::size_t pseudo_count = 0;
};

/// Standardize, generate pseudo-OODs, select gamma, fit. Errors carry the layer name.
LayerBuild build_layer(const std::string& name, const FeatureMatrix& raw, const tuner::TuneSpec& tune,
                       const pseudo_ood::ShiftConfig& shift);

/// Fits a layer detector with fixed stats and gamma (no tuning).
LayerDetector fit_layer(const std::string& name, const preprocess::StandardizeStats& stats, const FeatureMatrix& raw,
                        double nu, double gamma, double solver_tol = 1e-6);

/// build_layer on every layer, delta = 0. Per-layer tuning reports are
/// appended to `reports` when given.
DetectorEnsemble build_ensemble(std::span<const LayerFeatures> per_layer_train, const tuner::TuneSpec& tune,
                                const pseudo_ood::ShiftConfig& shift,
                                std::vector<tuner::TuneResult>* reports = nullptr);

}  // namespace laood::ensemble
