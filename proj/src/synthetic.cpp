#include "laood/synthetic.hpp"

#include <cmath>

#include "laood/error.hpp"
#include "laood/io.hpp"
#include "laood/random.hpp"

namespace laood::io {

namespace fs = std::filesystem;

OodKind parse_ood_kind(const std::string& name) {
  if (name == "far_gaussian") return OodKind::far_gaussian;
  if (name == "shell") return OodKind::shell;
  if (name == "layerwise_mixed") return OodKind::layerwise_mixed;
  throw Error("unknown OOD kind '" + name + "' (expected far_gaussian, shell or layerwise_mixed)");
}

std::string to_string(OodKind kind) {
  switch (kind) {
    case OodKind::far_gaussian: return "far_gaussian";
    case OodKind::shell: return "shell";
    case OodKind::layerwise_mixed: return "layerwise_mixed";
  }
  return "unknown";
}

void SynthSpec::validate() const {
  if (n_ind < 2) throw Error("gen_synthetic: n_ind must be at least 2");
  if (n_ood < 2) throw Error("gen_synthetic: n_ood must be at least 2");
  if (dims < 1) throw Error("gen_synthetic: dims must be at least 1");
}

namespace {

constexpr std::size_t kLayers = 2;

void ind_row(Rng& rng, int label, std::span<double> out) {
  for (double& v : out) v = rng.normal();
  out[0] += label == 0 ? -kClassOffset : kClassOffset;
}

void far_row(Rng& rng, std::span<double> out) {
  const double per_axis = kFarOodOffset / std::sqrt(static_cast<double>(out.size()));
  for (double& v : out) v = per_axis + rng.normal();
}

void shell_row(Rng& rng, std::span<double> out) {
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : out) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  const double radius = std::sqrt(static_cast<double>(out.size()) + kClassOffset * kClassOffset) + 4.0;
  for (double& v : out) v *= radius / std::sqrt(norm);
}

void ind_block(Rng& rng, std::size_t n, std::size_t d, std::vector<Matrix>& layers, std::vector<int>& labels) {
  layers.assign(kLayers, Matrix(n, d));
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    for (std::size_t l = 0; l < kLayers; ++l) ind_row(rng, labels[i], layers[l].row(i));
  }
}

}  // namespace

SynthData make_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthData data;
  ind_block(rng, spec.n_ind, spec.dims, data.train, data.train_labels);
  ind_block(rng, spec.n_ind, spec.dims, data.test_ind, data.test_ind_labels);

  data.test_ood.assign(kLayers, Matrix(spec.n_ood, spec.dims));
  const std::size_t group_a = (spec.n_ood + 1) / 2;
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    switch (spec.kind) {
      case OodKind::far_gaussian:
        for (auto& layer : data.test_ood) far_row(rng, layer.row(i));
        break;
      case OodKind::shell:
        for (auto& layer : data.test_ood) shell_row(rng, layer.row(i));
        break;
      case OodKind::layerwise_mixed: {
        const int group = i < group_a ? 0 : 1;
        data.ood_groups.push_back(group);
        const int cls = static_cast<int>(i % 2);
        for (std::size_t l = 0; l < kLayers; ++l) {
          if (static_cast<int>(l) == group) far_row(rng, data.test_ood[l].row(i));
          else ind_row(rng, cls, data.test_ood[l].row(i));
        }
        break;
      }
    }
  }
  return data;
}

namespace {

fs::path write_split(const fs::path& dir, const std::string& split, const std::vector<Matrix>& layers,
                     const std::vector<int>* labels) {
  Manifest m;
  m.num_samples = layers.front().rows();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string name = "layer" + std::to_string(l + 1);
    const std::string file = split + "_" + name + ".laod";
    write_features(dir / file, layers[l]);
    m.layers.push_back({name, layers[l].cols(), file});
  }
  if (labels && !labels->empty()) {
    m.labels_file = split + "_labels.txt";
    write_labels(dir / *m.labels_file, *labels);
  }
  const fs::path path = dir / (split + ".json");
  save_manifest(path, m);
  return path;
}

}  // namespace

SynthPaths gen_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  const SynthData data = make_synthetic(spec);
  fs::create_directories(out_dir);
  SynthPaths paths;
  paths.train = write_split(out_dir, "train", data.train, &data.train_labels);
  paths.test_ind = write_split(out_dir, "test_ind", data.test_ind, &data.test_ind_labels);
  paths.test_ood = write_split(out_dir, "test_ood", data.test_ood, &data.ood_groups);
  return paths;
}

}  // namespace laood::io
