#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "laood/backbone.hpp"
#include "laood/ensemble.hpp"
#include "laood/matrix.hpp"

namespace laood::io {

// Feature file layout (little-endian regardless of host):
//   bytes 0..3   magic "LAOD"
//   bytes 4..7   uint32 version = 1
//   bytes 8..15  uint64 rows
//   bytes 16..23 uint64 cols
//   then rows*cols float32 values, row-major.
inline constexpr char kFeatureMagic[4] = {'L', 'A', 'O', 'D'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 24;

struct FeatureFileHeader {
  std::uint32_t version = kFeatureVersion;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

/// Encoded file bytes. Values are narrowed to float32; non-finite values are rejected.
std::string encode_features(const FeatureMatrix& M);
/// Parses and validates every header field before touching the payload.
/// `source` names the input in error messages.
FeatureMatrix decode_features(const std::string& bytes, const std::string& source = "<memory>");
FeatureFileHeader decode_header(const std::string& bytes, const std::string& source = "<memory>");

void write_features(const std::filesystem::path& path, const FeatureMatrix& M);
FeatureMatrix read_features(const std::filesystem::path& path);
FeatureFileHeader read_header(const std::filesystem::path& path);

struct ManifestLayer {
  std::string name;
  std::size_t dim = 0;
  std::string file;  // relative to the manifest's directory unless absolute
};

/// JSON dataset description shared with external feature exporters.
struct Manifest {
  int version = 1;
  std::size_t num_samples = 0;
  std::vector<ManifestLayer> layers;
  std::optional<std::string> labels_file;

  std::filesystem::path base_dir;  // directory of the manifest file; not serialized
  std::filesystem::path resolve(const std::string& file) const;
};

Manifest parse_manifest(const std::string& text, const std::string& source = "<memory>");
std::string manifest_to_json(const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& m);

std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);

struct Dataset {
  Manifest manifest;
  std::vector<ensemble::LayerFeatures> layers;
  std::optional<std::vector<int>> labels;

  std::vector<FeatureMatrix> matrices() const;
};

/// Loads a manifest and every referenced file, checking that each header
/// matches num_samples and the declared dim.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Model file: JSON with sorted keys and shortest round-trip numbers.
inline constexpr int kModelFormatVersion = 1;
std::string model_to_json(const ensemble::DetectorEnsemble& ens);
ensemble::DetectorEnsemble model_from_json(const std::string& text, const std::string& source = "<memory>");
void save_model(const std::filesystem::path& path, const ensemble::DetectorEnsemble& ens);
ensemble::DetectorEnsemble load_model(const std::filesystem::path& path);

/// Backbone weights: {"layer_dims": [...], "parameters": [...]}.
std::string backbone_to_json(const backbone::ToyBackbone& bb);
backbone::ToyBackbone backbone_from_json(const std::string& text, const std::string& source = "<memory>");

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace laood::io
