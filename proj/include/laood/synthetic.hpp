#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "laood/matrix.hpp"

namespace laood::io {

enum class OodKind {
  far_gaussian,     // OOD Gaussian whose mean sits 6 sigma from the InD mean, in every layer
  shell,            // OOD on a sphere well outside the InD bulk, in every layer
  layerwise_mixed,  // group A deviates only in layer 1, group B only in layer 2
};

OodKind parse_ood_kind(const std::string& name);
std::string to_string(OodKind kind);

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_ind = 1000;  // rows in train and in test_ind each
  std::size_t n_ood = 1000;
  std::size_t dims = 8;      // per-layer feature dimension
  OodKind kind = OodKind::far_gaussian;

  void validate() const;
};

/// Distance between the OOD mean and the InD mean, in InD standard deviations.
inline constexpr double kFarOodOffset = 6.0;
/// InD class centers sit at +/- this value along the first axis.
inline constexpr double kClassOffset = 1.5;

/// In-memory synthetic split. Every set has two layers, "layer1" and "layer2".
/// InD rows alternate between two classes (labels 0/1). For layerwise_mixed,
/// ood_groups holds 0 for group A rows and 1 for group B rows.
struct SynthData {
  std::vector<Matrix> train, test_ind, test_ood;
  std::vector<int> train_labels, test_ind_labels, ood_groups;
};

SynthData make_synthetic(const SynthSpec& spec);

struct SynthPaths {
  std::filesystem::path train, test_ind, test_ood;
};

/// Writes train.json, test_ind.json and test_ood.json plus their feature and
/// label files into out_dir (created if needed).
SynthPaths gen_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace laood::io
