#include <doctest.h>

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "laood/error.hpp"
#include "laood/io.hpp"
#include "laood/synthetic.hpp"
#include "support/oracles.hpp"

using namespace laood;
using namespace laood::io;

namespace {

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string field_of(const std::string& bytes) {
  try {
    decode_features(bytes, "f");
  } catch (const FormatError& e) {
    return e.field();
  }
  return "";
}

ensemble::DetectorEnsemble small_ensemble() {
  const auto data = make_synthetic(SynthSpec{3, 80, 20, 3, OodKind::far_gaussian});
  std::vector<ensemble::LayerFeatures> layers{{"layer1", data.train[0]}, {"layer2", data.train[1]}};
  Matrix& m = layers[1].features;
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, 2) = 4.0;  // one constant column
  tuner::TuneSpec spec;
  spec.gamma_grid = {0.1, 0.5};
  return ensemble::build_ensemble(layers, spec, pseudo_ood::ShiftConfig{});
}

}  // namespace

TEST_CASE("empty matrix is a bare header") {
  const std::string bytes = encode_features(Matrix(0, 0));
  CHECK(bytes.size() == 24);
  const auto M = decode_features(bytes);
  CHECK(M.rows() == 0);
  CHECK(M.cols() == 0);
}

TEST_CASE("one-by-one matrix has a fixed byte layout") {
  const std::string bytes = encode_features(Matrix{{1.0}});
  const std::string expected = std::string("LAOD") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00\x00\x00\x00\x00", 8) +
                               std::string("\x01\x00\x00\x00\x00\x00\x00\x00", 8) +
                               std::string("\x00\x00\x80\x3f", 4);
  CHECK(bytes == expected);
  CHECK(decode_features(bytes) == Matrix{{1.0}});
}

TEST_CASE("header errors name the field") {
  const std::string good = encode_features(Matrix{{1.0, 2.0}, {3.0, 4.0}});
  CHECK(field_of(good.substr(0, 10)) == "f: header");

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(field_of(bad_magic) == "f: magic");

  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK(field_of(bad_version) == "f: version");

  CHECK(field_of(good.substr(0, good.size() - 1)) == "f: payload");
  CHECK(field_of(good + "x") == "f: payload");

  std::string huge = good;
  for (int i = 8; i < 24; ++i) huge[static_cast<std::size_t>(i)] = '\xff';
  CHECK(field_of(huge) == "f: rows");
}

TEST_CASE("non-finite values are refused") {
  CHECK_THROWS_AS(encode_features(Matrix{{std::numeric_limits<double>::infinity()}}), Error);
  CHECK_THROWS_AS(encode_features(Matrix{{1e300}}), Error);
}

TEST_CASE("file round trip and frozen digest") {
  oracle::TempDir dir("io");
  Matrix M = oracle::gaussian_matrix(100, 16, 2024);
  write_features(dir / "m.laod", M);
  const Matrix back = read_features(dir / "m.laod");
  CHECK(back.rows() == 100);
  CHECK(back.cols() == 16);
  for (std::size_t k = 0; k < M.data().size(); ++k)
    CHECK(back.data()[k] == static_cast<double>(static_cast<float>(M.data()[k])));
  CHECK(encode_features(back) == read_text(dir / "m.laod"));
  CHECK(sha256_hex(read_text(dir / "m.laod")) == "183f37915b54b8c8efed1fd2b922fb1fbc9721784890d211c0116cb4008272b4");
  CHECK(read_header(dir / "m.laod").cols == 16);
  CHECK_THROWS_AS(read_features(dir / "missing.laod"), Error);
}

TEST_CASE("manifest parsing and validation") {
  const std::string text = R"({"version": 1, "num_samples": 3,
    "layers": [{"name": "a", "dim": 2, "file": "a.laod"}], "labels_file": "y.txt"})";
  const auto m = parse_manifest(text, "m.json");
  CHECK(m.num_samples == 3);
  REQUIRE(m.layers.size() == 1);
  CHECK(m.layers[0].dim == 2);
  CHECK(m.labels_file == "y.txt");
  CHECK(parse_manifest(manifest_to_json(m)).layers[0].file == "a.laod");

  auto field = [](const std::string& t) {
    try {
      parse_manifest(t, "m.json");
    } catch (const FormatError& e) {
      return e.field();
    }
    return std::string();
  };
  CHECK(field(R"({"version": 2, "num_samples": 1, "layers": [{"name": "a", "dim": 1, "file": "a"}]})") ==
        "m.json: /version");
  CHECK(field(R"({"version": 1, "num_samples": 1, "layers": []})") == "m.json: /layers");
  CHECK(field(R"({"version": 1, "layers": [{"name": "a", "dim": 1, "file": "a"}]})") == "m.json: /num_samples");
  CHECK(field(R"({"version": 1, "num_samples": 1, "layers": [{"name": "a", "dim": "x", "file": "a"}]})") ==
        "m.json: /layers/0/dim");
  CHECK(field(R"({"version": 1, "num_samples": 1, "layers": [{"name": "a", "dim": 1, "file": "a"},
                  {"name": "a", "dim": 1, "file": "b"}]})") == "m.json: /layers/1/name");
  CHECK(field("{not json") == "m.json");
}

TEST_CASE("dataset loading checks headers against the manifest") {
  oracle::TempDir dir("ds");
  write_features(dir / "a.laod", oracle::gaussian_matrix(3, 2, 1));
  write_labels(dir / "y.txt", {0, 1, 1});
  Manifest m;
  m.num_samples = 3;
  m.layers = {{"a", 2, "a.laod"}};
  m.labels_file = "y.txt";
  save_manifest(dir / "ok.json", m);
  const auto ds = load_dataset(dir / "ok.json");
  CHECK(ds.layers[0].features.rows() == 3);
  CHECK(*ds.labels == std::vector<int>{0, 1, 1});

  m.layers[0].dim = 3;
  save_manifest(dir / "dim.json", m);
  CHECK_THROWS_AS(load_dataset(dir / "dim.json"), FormatError);
  m.layers[0].dim = 2;
  m.num_samples = 4;
  save_manifest(dir / "rows.json", m);
  CHECK_THROWS_AS(load_dataset(dir / "rows.json"), FormatError);
  m.num_samples = 3;
  write_labels(dir / "y.txt", {0, 1});
  save_manifest(dir / "labels.json", m);
  CHECK_THROWS_AS(load_dataset(dir / "labels.json"), FormatError);
}

TEST_CASE("model round trip reproduces scores exactly") {
  const auto ens = small_ensemble();
  const std::string json = model_to_json(ens);
  CHECK(json == model_to_json(ens));
  const auto back = model_from_json(json);
  CHECK(model_to_json(back) == json);
  CHECK(back.layers[1].stats.is_flagged(2));

  const auto probes = oracle::gaussian_matrix(10, 3, 55, 2.0);
  const std::vector<Matrix> mats{probes, probes};
  const auto a = ensemble::score_dataset(ens, mats), b = ensemble::score_dataset(back, mats);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.samples[i].per_layer_scores == b.samples[i].per_layer_scores);
    CHECK(a.samples[i].final_score == b.samples[i].final_score);
  }

  oracle::TempDir dir("model");
  save_model(dir / "m.json", ens);
  CHECK(read_text(dir / "m.json") == json);
  CHECK(load_model(dir / "m.json").layers[0].model.rho == ens.layers[0].model.rho);
}

TEST_CASE("model schema errors carry a JSON path") {
  auto field = [](const std::string& t) {
    try {
      model_from_json(t, "m");
    } catch (const FormatError& e) {
      return e.field();
    }
    return std::string();
  };
  CHECK(field(R"({"format_version": 9, "delta": 0, "layers": []})") == "m: /format_version");
  std::string json = model_to_json(small_ensemble());
  const auto pos = json.find("\"gamma\"");
  json.replace(pos, 7, "\"gamme\"");
  CHECK(field(json) == "m: /layers/0/gamma");
}

TEST_CASE("backbone weights round trip") {
  const auto bb = backbone::ToyBackbone::random({3, 4, 2}, 5);
  const auto back = backbone_from_json(backbone_to_json(bb));
  CHECK(back.layer_dims() == bb.layer_dims());
  CHECK(std::vector<double>(back.parameters().begin(), back.parameters().end()) ==
        std::vector<double>(bb.parameters().begin(), bb.parameters().end()));
  CHECK_THROWS_AS(backbone_from_json(R"({"layer_dims": [3, 4, 2], "parameters": [1]})"), FormatError);
}

TEST_CASE("synthetic generation") {
  CHECK_THROWS_AS(make_synthetic(SynthSpec{1, 1, 10, 4, OodKind::far_gaussian}), Error);
  CHECK_THROWS_AS(make_synthetic(SynthSpec{1, 10, 10, 0, OodKind::far_gaussian}), Error);
  CHECK_THROWS_AS(parse_ood_kind("near"), Error);

  SUBCASE("two runs write identical bytes") {
    oracle::TempDir a("sa"), b("sb");
    const SynthSpec spec{7, 50, 40, 4, OodKind::layerwise_mixed};
    gen_synthetic(spec, a.path());
    gen_synthetic(spec, b.path());
    for (const char* f : {"train.json", "test_ind.json", "test_ood.json", "train_layer1.laod", "test_ood_layer2.laod",
                          "train_labels.txt", "test_ood_labels.txt"})
      CHECK(read_text(a / f) == read_text(b / f));
    const auto ds = load_dataset(a / "test_ood.json");
    CHECK(ds.layers.size() == 2);
    CHECK(ds.labels->size() == 40);
  }

  SUBCASE("far_gaussian OOD mean sits at least 5 sigma from the InD mean") {
    const auto d = make_synthetic(SynthSpec{7, 1000, 1000, 8, OodKind::far_gaussian});
    for (std::size_t l = 0; l < 2; ++l) {
      double dist2 = 0.0;
      for (std::size_t c = 0; c < 8; ++c) {
        double mi = 0.0, mo = 0.0;
        for (std::size_t i = 0; i < 1000; ++i) {
          mi += d.test_ind[l](i, c) / 1000.0;
          mo += d.test_ood[l](i, c) / 1000.0;
        }
        dist2 += (mi - mo) * (mi - mo);
      }
      CHECK(std::sqrt(dist2) >= 5.0);
    }
  }

  SUBCASE("layerwise_mixed groups deviate in one layer only") {
    const auto d = make_synthetic(SynthSpec{7, 100, 100, 4, OodKind::layerwise_mixed});
    CHECK(d.ood_groups.size() == 100);
    CHECK(d.ood_groups[0] == 0);
    CHECK(d.ood_groups[99] == 1);
  }
}
