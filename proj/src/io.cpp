#include "laood/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "laood/error.hpp"

namespace laood::io {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(path.string() + ": write failed");
}

namespace {

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
}

template <class T>
T get_le(const std::string& in, std::size_t offset) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b)
    v |= static_cast<T>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return v;
}

}  // namespace

std::string encode_features(const FeatureMatrix& M) {
  std::string out;
  out.reserve(kFeatureHeaderSize + 4 * M.rows() * M.cols());
  out.append(kFeatureMagic, 4);
  put_le<std::uint32_t>(out, kFeatureVersion);
  put_le<std::uint64_t>(out, M.rows());
  put_le<std::uint64_t>(out, M.cols());
  for (double v : M.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error("write_features: non-finite value");
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

FeatureFileHeader decode_header(const std::string& bytes, const std::string& source) {
  if (bytes.size() < kFeatureHeaderSize)
    throw FormatError(source + ": header", "truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw FormatError(source + ": magic", "expected \"LAOD\"");
  FeatureFileHeader h;
  h.version = get_le<std::uint32_t>(bytes, 4);
  if (h.version != kFeatureVersion)
    throw FormatError(source + ": version", "unsupported version " + std::to_string(h.version));
  h.rows = get_le<std::uint64_t>(bytes, 8);
  h.cols = get_le<std::uint64_t>(bytes, 16);
  const std::uint64_t max_values = (std::numeric_limits<std::uint64_t>::max() - kFeatureHeaderSize) / 4;
  if (h.cols != 0 && h.rows > max_values / h.cols)
    throw FormatError(source + ": rows", "rows*cols overflows");
  const std::uint64_t expected = kFeatureHeaderSize + 4 * h.rows * h.cols;
  if (bytes.size() != expected)
    throw FormatError(source + ": payload", "length " + std::to_string(bytes.size()) + " != expected " +
                                                std::to_string(expected));
  return h;
}

FeatureMatrix decode_features(const std::string& bytes, const std::string& source) {
  const FeatureFileHeader h = decode_header(bytes, source);
  FeatureMatrix M(h.rows, h.cols);
  auto data = M.data();
  for (std::size_t k = 0; k < data.size(); ++k)
    data[k] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, kFeatureHeaderSize + 4 * k)));
  return M;
}

void write_features(const fs::path& path, const FeatureMatrix& M) { write_text(path, encode_features(M)); }

FeatureMatrix read_features(const fs::path& path) { return decode_features(read_text(path), path.string()); }

FeatureFileHeader read_header(const fs::path& path) {
  // The full file is needed for the length check.
  return decode_header(read_text(path), path.string());
}

// ---- manifests -------------------------------------------------------------

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path, const std::string& source) {
  if (!obj.is_object()) throw FormatError(source + ": " + path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(source + ": " + path + "/" + key, "missing");
  return *it;
}

double as_number(const json& v, const std::string& path, const std::string& source) {
  if (!v.is_number()) throw FormatError(source + ": " + path, "expected a number");
  return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& path, const std::string& source) {
  if (!v.is_number_unsigned()) throw FormatError(source + ": " + path, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::string as_string(const json& v, const std::string& path, const std::string& source) {
  if (!v.is_string()) throw FormatError(source + ": " + path, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& path, const std::string& source) {
  if (!v.is_array()) throw FormatError(source + ": " + path, "expected an array");
  return v;
}

std::vector<double> as_doubles(const json& v, const std::string& path, const std::string& source) {
  as_array(v, path, source);
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "/" + std::to_string(i), source));
  return out;
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

fs::path Manifest::resolve(const std::string& file) const {
  const fs::path p(file);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest parse_manifest(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  Manifest m;
  const json& version = require(j, "version", "", source);
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw FormatError(source + ": /version", "unsupported manifest version");
  m.num_samples = as_count(require(j, "num_samples", "", source), "/num_samples", source);
  const json& layers = as_array(require(j, "layers", "", source), "/layers", source);
  if (layers.empty()) throw FormatError(source + ": /layers", "empty layer list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "/layers/" + std::to_string(i);
    ManifestLayer l;
    l.name = as_string(require(layers[i], "name", p, source), p + "/name", source);
    l.dim = as_count(require(layers[i], "dim", p, source), p + "/dim", source);
    l.file = as_string(require(layers[i], "file", p, source), p + "/file", source);
    if (!names.insert(l.name).second) throw FormatError(source + ": " + p + "/name", "duplicate layer name");
    m.layers.push_back(std::move(l));
  }
  if (auto it = j.find("labels_file"); it != j.end() && !it->is_null())
    m.labels_file = as_string(*it, "/labels_file", source);
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["version"] = m.version;
  j["num_samples"] = m.num_samples;
  j["layers"] = json::array();
  for (const auto& l : m.layers) j["layers"].push_back({{"name", l.name}, {"dim", l.dim}, {"file", l.file}});
  if (m.labels_file) j["labels_file"] = *m.labels_file;
  return j.dump(2) + "\n";
}

Manifest load_manifest(const fs::path& path) {
  Manifest m = parse_manifest(read_text(path), path.string());
  m.base_dir = path.parent_path();
  return m;
}

void save_manifest(const fs::path& path, const Manifest& m) { write_text(path, manifest_to_json(m)); }

std::vector<int> read_labels(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      labels.push_back(std::stoi(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no), "expected an integer label");
    }
  }
  return labels;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::string text;
  for (int y : labels) text += std::to_string(y) + "\n";
  write_text(path, text);
}

std::vector<FeatureMatrix> Dataset::matrices() const {
  std::vector<FeatureMatrix> out;
  for (const auto& l : layers) out.push_back(l.features);
  return out;
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  for (std::size_t i = 0; i < ds.manifest.layers.size(); ++i) {
    const auto& ml = ds.manifest.layers[i];
    const fs::path file = ds.manifest.resolve(ml.file);
    FeatureMatrix M = read_features(file);
    const std::string where = manifest_path.string() + ": /layers/" + std::to_string(i);
    if (M.rows() != ds.manifest.num_samples)
      throw FormatError(where + "/file", file.string() + " has " + std::to_string(M.rows()) +
                                             " rows, manifest num_samples is " +
                                             std::to_string(ds.manifest.num_samples));
    if (M.cols() != ml.dim && M.rows() > 0)
      throw FormatError(where + "/dim", file.string() + " has " + std::to_string(M.cols()) +
                                            " columns, manifest dim is " + std::to_string(ml.dim));
    ds.layers.push_back({ml.name, std::move(M)});
  }
  if (ds.manifest.labels_file) {
    ds.labels = read_labels(ds.manifest.resolve(*ds.manifest.labels_file));
    if (ds.labels->size() != ds.manifest.num_samples)
      throw FormatError(manifest_path.string() + ": /labels_file",
                        "has " + std::to_string(ds.labels->size()) + " labels for " +
                            std::to_string(ds.manifest.num_samples) + " samples");
  }
  return ds;
}

// ---- models ----------------------------------------------------------------

std::string model_to_json(const ensemble::DetectorEnsemble& ens) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["delta"] = ens.delta;
  j["layers"] = json::array();
  for (const auto& l : ens.layers) {
    json layer;
    layer["name"] = l.name;
    layer["gamma"] = l.model.kernel.gamma;
    layer["nu"] = l.model.nu;
    layer["rho"] = l.model.rho;
    layer["n_train"] = l.model.n_train;
    layer["mean"] = l.stats.mean;
    layer["std"] = l.stats.std;
    layer["flagged_columns"] = l.stats.flagged;
    layer["support"] = json::array();
    for (std::size_t k = 0; k < l.model.alphas.size(); ++k) {
      auto sv = l.model.support_vectors.row(k);
      layer["support"].push_back(
          {{"alpha", l.model.alphas[k]}, {"vector", std::vector<double>(sv.begin(), sv.end())}});
    }
    j["layers"].push_back(std::move(layer));
  }
  return j.dump(1) + "\n";
}

ensemble::DetectorEnsemble model_from_json(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  const json& version = require(j, "format_version", "", source);
  if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion)
    throw FormatError(source + ": /format_version", "unsupported model format version " + version.dump());

  ensemble::DetectorEnsemble ens;
  ens.delta = as_number(require(j, "delta", "", source), "/delta", source);
  const json& layers = as_array(require(j, "layers", "", source), "/layers", source);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "/layers/" + std::to_string(i);
    const json& lj = layers[i];
    ensemble::LayerDetector l;
    l.name = as_string(require(lj, "name", p, source), p + "/name", source);
    l.model.kernel.gamma = as_number(require(lj, "gamma", p, source), p + "/gamma", source);
    l.model.nu = as_number(require(lj, "nu", p, source), p + "/nu", source);
    l.model.rho = as_number(require(lj, "rho", p, source), p + "/rho", source);
    l.model.n_train = as_count(require(lj, "n_train", p, source), p + "/n_train", source);
    l.stats.mean = as_doubles(require(lj, "mean", p, source), p + "/mean", source);
    l.stats.std = as_doubles(require(lj, "std", p, source), p + "/std", source);
    if (l.stats.std.size() != l.stats.mean.size())
      throw FormatError(source + ": " + p + "/std", "length differs from mean");
    for (std::size_t c = 0; c < l.stats.std.size(); ++c)
      if (!(l.stats.std[c] > 0.0)) throw FormatError(source + ": " + p + "/std/" + std::to_string(c), "must be positive");
    const json& flagged = as_array(require(lj, "flagged_columns", p, source), p + "/flagged_columns", source);
    for (std::size_t f = 0; f < flagged.size(); ++f) {
      const std::size_t c = as_count(flagged[f], p + "/flagged_columns/" + std::to_string(f), source);
      if (c >= l.stats.mean.size())
        throw FormatError(source + ": " + p + "/flagged_columns/" + std::to_string(f), "column out of range");
      l.stats.flagged.push_back(c);
    }
    const json& support = as_array(require(lj, "support", p, source), p + "/support", source);
    if (support.empty()) throw FormatError(source + ": " + p + "/support", "no support vectors");
    l.model.support_vectors = Matrix(0, l.stats.dim());
    for (std::size_t k = 0; k < support.size(); ++k) {
      const std::string sp = p + "/support/" + std::to_string(k);
      l.model.alphas.push_back(as_number(require(support[k], "alpha", sp, source), sp + "/alpha", source));
      const auto v = as_doubles(require(support[k], "vector", sp, source), sp + "/vector", source);
      if (v.size() != l.stats.dim())
        throw FormatError(source + ": " + sp + "/vector", "expected " + std::to_string(l.stats.dim()) + " values");
      l.model.support_vectors.append_row(v);
    }
    try {
      l.model.kernel.validate();
    } catch (const std::exception& e) {
      throw FormatError(source + ": " + p + "/gamma", e.what());
    }
    ens.layers.push_back(std::move(l));
  }
  try {
    ens.validate();
  } catch (const std::exception& e) {
    throw FormatError(source + ": /layers", e.what());
  }
  return ens;
}

std::string backbone_to_json(const backbone::ToyBackbone& bb) {
  json j;
  j["layer_dims"] = bb.layer_dims();
  const auto p = bb.parameters();
  j["parameters"] = std::vector<double>(p.begin(), p.end());
  return j.dump() + "\n";
}

backbone::ToyBackbone backbone_from_json(const std::string& text, const std::string& source) {
  const json j = parse_json(text, source);
  const json& dims_j = as_array(require(j, "layer_dims", "", source), "/layer_dims", source);
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < dims_j.size(); ++i) dims.push_back(as_count(dims_j[i], "/layer_dims/" + std::to_string(i), source));
  backbone::ToyBackbone bb;
  try {
    bb = backbone::ToyBackbone(dims);
  } catch (const std::exception& e) {
    throw FormatError(source + ": /layer_dims", e.what());
  }
  const auto params = as_doubles(require(j, "parameters", "", source), "/parameters", source);
  if (params.size() != bb.num_parameters())
    throw FormatError(source + ": /parameters", "expected " + std::to_string(bb.num_parameters()) + " values");
  std::copy(params.begin(), params.end(), bb.parameters().begin());
  return bb;
}

void save_model(const fs::path& path, const ensemble::DetectorEnsemble& ens) { write_text(path, model_to_json(ens)); }

ensemble::DetectorEnsemble load_model(const fs::path& path) { return model_from_json(read_text(path), path.string()); }

}  // namespace laood::io
