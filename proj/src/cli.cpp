#include "laood/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "laood/backbone.hpp"
#include "laood/ensemble.hpp"
#include "laood/error.hpp"
#include "laood/io.hpp"
#include "laood/metrics.hpp"
#include "laood/synthetic.hpp"
#include "laood/tuner.hpp"

namespace laood::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("--gamma-grid: invalid value '" + item + "'");
    }
  }
  return grid;
}

std::string default_grid_csv() {
  std::string s;
  for (double g : tuner::default_gamma_grid()) s += (s.empty() ? "" : ",") + fmt9(g);
  return s;
}

struct TuneFlags {
  double nu = 0.001;
  std::string gamma_grid = default_grid_csv();
  std::string criterion = "auroc";
  std::string tune_ind = "train";
  std::size_t k_neighbors = 0;
  double edge_threshold = 0.1;
  double shift_scale = 1.0;

  void add_to(CLI::App* app) {
    app->add_option("--nu", nu, "OCSVM nu (fixed, not tuned)");
    app->add_option("--gamma-grid", gamma_grid, "Comma-separated increasing gamma grid");
    app->add_option("--criterion", criterion, "Gamma selection criterion: auroc|balanced_error");
    app->add_option("--tune-ind", tune_ind, "InD side scored during tuning: train|pseudo_targets|holdout");
    app->add_option("--k-neighbors", k_neighbors, "Neighbors for edge detection (0 = min(20, n-1))");
    app->add_option("--edge-threshold", edge_threshold, "Minimum edge score of a shifted point");
    app->add_option("--shift-scale", shift_scale, "Outward shift in units of mean k-NN distance");
  }
  tuner::TuneSpec tune() const {
    tuner::TuneSpec spec;
    spec.nu = nu;
    spec.gamma_grid = parse_grid(gamma_grid);
    spec.criterion = tuner::parse_criterion(criterion);
    spec.ind_side = tuner::parse_ind_side(tune_ind);
    return spec;
  }
  pseudo_ood::ShiftConfig shift() const {
    pseudo_ood::ShiftConfig s;
    s.k_neighbors = k_neighbors;
    s.edge_threshold = edge_threshold;
    s.shift_scale = shift_scale;
    return s;
  }
};

// Matches model layers to dataset layers by name, in model order.
std::vector<FeatureMatrix> aligned_matrices(const ensemble::DetectorEnsemble& ens, const io::Dataset& ds,
                                            const std::string& manifest) {
  std::vector<FeatureMatrix> out;
  for (const auto& layer : ens.layers) {
    auto it = std::find_if(ds.layers.begin(), ds.layers.end(), [&](const auto& l) { return l.name == layer.name; });
    if (it == ds.layers.end()) throw Error(manifest + ": /layers: no layer named '" + layer.name + "'");
    out.push_back(it->features);
  }
  return out;
}

std::string scores_csv(const ensemble::DetectorEnsemble& ens, const ensemble::DatasetPrediction& pred) {
  std::string csv = "sample_index";
  for (const auto& l : ens.layers) csv += ",score_" + l.name;
  csv += ",final_score,argmax_layer,confusion,is_ood\n";
  for (std::size_t i = 0; i < pred.samples.size(); ++i) {
    const auto& s = pred.samples[i];
    csv += std::to_string(i);
    for (double v : s.per_layer_scores) csv += "," + fmt9(v);
    csv += "," + fmt9(s.final_score) + "," + std::to_string(s.argmax_layer + 1) + "," + fmt9(s.confusion) + "," +
           (s.is_ood ? "1" : "0") + "\n";
  }
  return csv;
}

std::vector<double> read_score_column(const fs::path& path, const std::string& column) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": header", "empty file");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  const auto col_it = std::find(header.begin(), header.end(), column);
  if (col_it == header.end()) throw FormatError(path.string() + ": " + column, "column not found in header");
  const auto col = static_cast<std::size_t>(col_it - header.begin());

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    for (std::size_t c = 0; c <= col; ++c)
      if (!std::getline(ls, cell, ','))
        throw FormatError(path.string() + ": line " + std::to_string(line_no), "missing column " + column);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no), "invalid number '" + cell + "'");
    }
  }
  return values;
}

std::string histogram(const std::vector<double>& values, std::size_t bins) {
  if (values.empty()) return "(no samples)\n";
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    counts[std::min(b, bins - 1)]++;
  }
  const std::size_t peak = *std::max_element(counts.begin(), counts.end());
  std::string out;
  char buf[128];
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    std::snprintf(buf, sizeof buf, "[%12.6g, %12.6g) %7zu ", a, a + width, counts[b]);
    out += buf;
    out += std::string(peak ? counts[b] * 50 / peak : 0, '#');
    out += "\n";
  }
  return out;
}

int cmd_gen_synth(std::uint64_t seed, const std::string& kind, const std::string& out_dir, std::size_t n_ind,
                  std::size_t n_ood, std::size_t dims, std::ostream& out) {
  io::SynthSpec spec;
  spec.seed = seed;
  spec.kind = io::parse_ood_kind(kind);
  spec.n_ind = n_ind;
  spec.n_ood = n_ood;
  spec.dims = dims;
  const auto paths = io::gen_synthetic(spec, out_dir);
  out << "train=" << paths.train.string() << "\n"
      << "test_ind=" << paths.test_ind.string() << "\n"
      << "test_ood=" << paths.test_ood.string() << "\n";
  return kExitOk;
}

int cmd_fit(const std::string& train, const std::string& model_out, const TuneFlags& flags, double delta,
            std::ostream& out) {
  const io::Dataset ds = io::load_dataset(train);
  std::vector<tuner::TuneResult> reports;
  auto ens = ensemble::build_ensemble(ds.layers, flags.tune(), flags.shift(), &reports);
  ens.delta = delta;
  io::save_model(model_out, ens);
  for (std::size_t l = 0; l < ens.size(); ++l)
    out << ens.layers[l].name << ": gamma=" << fmt9(reports[l].gamma)
        << " support_vectors=" << ens.layers[l].model.alphas.size() << " rho=" << fmt9(ens.layers[l].model.rho)
        << "\n";
  return kExitOk;
}

int cmd_score(const std::string& model_path, const std::string& features, const std::string& csv_out,
              const std::optional<double>& delta, std::ostream& out) {
  auto ens = io::load_model(model_path);
  if (delta) ens.delta = *delta;
  const io::Dataset ds = io::load_dataset(features);
  const auto mats = aligned_matrices(ens, ds, features);
  const auto pred = ensemble::score_dataset(ens, mats);
  io::write_text(csv_out, scores_csv(ens, pred));
  std::size_t flagged = 0;
  for (const auto& s : pred.samples) flagged += s.is_ood;
  out << "samples=" << pred.samples.size() << "\n" << "predicted_ood=" << flagged << "\n";
  for (std::size_t l = 0; l < ens.size(); ++l)
    out << "detections_" << ens.layers[l].name << "=" << pred.detections_per_layer[l] << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ind, const std::string& ood, double tpr, const std::string& column,
             std::ostream& out) {
  const auto s_ind = read_score_column(ind, column);
  const auto s_ood = read_score_column(ood, column);
  out << metrics::evaluate(s_ind, s_ood, tpr).to_text();
  return kExitOk;
}

int cmd_tune(const std::string& train, const std::string& layer, const TuneFlags& flags, std::ostream& out) {
  const io::Dataset ds = io::load_dataset(train);
  const auto spec = flags.tune();
  bool any = false;
  out << "layer,gamma," << tuner::to_string(spec.criterion) << ",selected,note\n";
  for (const auto& l : ds.layers) {
    if (!layer.empty() && l.name != layer) continue;
    any = true;
    const auto b = ensemble::build_layer(l.name, l.features, spec, flags.shift());
    for (const auto& e : b.tuning.entries) {
      out << l.name << "," << fmt9(e.gamma) << "," << (e.value ? fmt9(*e.value) : "") << ","
          << (e.gamma == b.tuning.gamma ? "*" : "") << ",";
      std::string note = e.skip_reason;
      std::replace(note.begin(), note.end(), ',', ';');
      out << note << "\n";
    }
  }
  if (!any) throw Error(train + ": /layers: no layer named '" + layer + "'");
  return kExitOk;
}

int cmd_confusion(const std::string& model_path, const std::string& features, const std::string& csv_out,
                  std::size_t bins, std::ostream& out) {
  const auto ens = io::load_model(model_path);
  const io::Dataset ds = io::load_dataset(features);
  const auto pred = ensemble::score_dataset(ens, aligned_matrices(ens, ds, features));
  std::string csv = "sample_index,confusion\n";
  std::vector<double> values;
  std::size_t negative = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.samples.size(); ++i) {
    const double c = pred.samples[i].confusion;
    values.push_back(c);
    negative += c < 0.0;
    sum += c;
    csv += std::to_string(i) + "," + fmt9(c) + "\n";
  }
  io::write_text(csv_out, csv);
  const double n = static_cast<double>(std::max<std::size_t>(1, values.size()));
  out << "samples=" << values.size() << "\n"
      << "mean_confusion=" << fmt9(sum / n) << "\n"
      << "negative_fraction=" << fmt9(static_cast<double>(negative) / n) << "\n"
      << histogram(values, std::max<std::size_t>(1, bins));
  return kExitOk;
}

int cmd_joint_train(const std::string& config_path, const std::string& train, const std::string& input_layer,
                    const std::string& model_out, const std::string& trace_out, const std::string& backbone_out,
                    std::ostream& out) {
  backbone::JointConfigFile cfg;
  {
    std::istringstream in(io::read_text(config_path));
    try {
      cfg = backbone::parse_joint_config(in);
    } catch (const FormatError& e) {
      throw Error(config_path + ": " + e.what());
    }
  }
  const io::Dataset ds = io::load_dataset(train);
  if (!ds.labels) throw Error(train + ": /labels_file: joint training needs class labels");
  const ensemble::LayerFeatures* input = &ds.layers.front();
  if (!input_layer.empty()) {
    auto it = std::find_if(ds.layers.begin(), ds.layers.end(), [&](const auto& l) { return l.name == input_layer; });
    if (it == ds.layers.end()) throw Error(train + ": /layers: no layer named '" + input_layer + "'");
    input = &*it;
  }
  const int max_label = *std::max_element(ds.labels->begin(), ds.labels->end());
  std::vector<std::size_t> dims{input->features.cols()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(std::max(1, max_label) + 1));

  auto bb = backbone::ToyBackbone::random(dims, cfg.config.seed);
  try {
    const auto res = backbone::train_alternating(std::move(bb), input->features, *ds.labels, cfg.config);
    io::save_model(model_out, res.detectors);
    io::write_text(trace_out, backbone::trace_to_csv(res.trace));
    if (!backbone_out.empty()) io::write_text(backbone_out, io::backbone_to_json(res.backbone));
    out << "baseline_accuracy=" << fmt9(res.baseline_accuracy) << "\n"
        << "final_accuracy=" << fmt9(res.final_accuracy) << "\n"
        << "final_objective=" << fmt9(res.trace.back().joint_objective) << "\n";
  } catch (const backbone::JointTrainingError& e) {
    io::write_text(trace_out, backbone::trace_to_csv(e.trace()));
    throw;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-adaptive OOD detection with per-layer one-class SVMs", "laood"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // gen-synth
  std::uint64_t seed = 0;
  std::string ood_kind, synth_out;
  std::size_t n_ind = 1000, n_ood = 1000, dims = 8;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic train/test split");
  gen->add_option("--seed", seed, "RNG seed")->required();
  gen->add_option("--ood-kind", ood_kind, "far_gaussian|shell|layerwise_mixed")->required();
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--n-ind", n_ind, "InD rows in train and in test_ind");
  gen->add_option("--n-ood", n_ood, "OOD test rows");
  gen->add_option("--dims", dims, "Per-layer feature dimension");

  // fit
  std::string fit_train, fit_out;
  double fit_delta = 0.0;
  TuneFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Build a per-layer detector ensemble");
  fit->add_option("--train", fit_train, "Training manifest")->required();
  fit->add_option("--out", fit_out, "Model file to write")->required();
  fit->add_option("--delta", fit_delta, "Decision threshold on the final score");
  fit_flags.add_to(fit);

  // score
  std::string score_model, score_features, score_out;
  std::optional<double> score_delta;
  auto* score = app.add_subcommand("score", "Score a dataset with a saved ensemble");
  score->add_option("--model", score_model, "Model file")->required();
  score->add_option("--features", score_features, "Feature manifest")->required();
  score->add_option("--out", score_out, "Per-sample CSV to write")->required();
  score->add_option("--delta", score_delta, "Override the model's decision threshold");

  // eval
  std::string eval_ind, eval_ood, eval_column = "final_score";
  double eval_tpr = 0.95;
  auto* eval = app.add_subcommand("eval", "AUROC, AUPR and FPR at a TPR target from score CSVs");
  eval->add_option("--scores-ind", eval_ind, "Scores of in-distribution samples")->required();
  eval->add_option("--scores-ood", eval_ood, "Scores of OOD samples")->required();
  eval->add_option("--tpr", eval_tpr, "TPR target for the FPR metric");
  eval->add_option("--column", eval_column, "CSV column holding the score");

  // tune
  std::string tune_train, tune_layer;
  TuneFlags tune_flags;
  auto* tune = app.add_subcommand("tune", "Report the gamma search per layer");
  tune->add_option("--train", tune_train, "Training manifest")->required();
  tune->add_option("--layer", tune_layer, "Only this layer (default: all)");
  tune_flags.add_to(tune);

  // confusion
  std::string conf_model, conf_features, conf_out;
  std::size_t conf_bins = 20;
  auto* confusion = app.add_subcommand("confusion", "Confusion scores (sum of layer scores) with a histogram");
  confusion->add_option("--model", conf_model, "Model file")->required();
  confusion->add_option("--features", conf_features, "Feature manifest")->required();
  confusion->add_option("--out", conf_out, "CSV to write")->required();
  confusion->add_option("--bins", conf_bins, "Histogram bins");

  // joint-train
  std::string jt_config, jt_train, jt_model, jt_trace, jt_backbone, jt_input;
  auto* joint = app.add_subcommand("joint-train", "Alternating backbone/detector training on a toy MLP");
  joint->add_option("--config", jt_config, "key = value config file")->required();
  joint->add_option("--train", jt_train, "Training manifest with labels_file")->required();
  joint->add_option("--out-model", jt_model, "Detector model file to write")->required();
  joint->add_option("--out-trace", jt_trace, "Objective trace CSV to write")->required();
  joint->add_option("--out-backbone", jt_backbone, "Backbone weights JSON to write");
  joint->add_option("--input-layer", jt_input, "Manifest layer used as network input (default: first)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(seed, ood_kind, synth_out, n_ind, n_ood, dims, out);
    if (*fit) return cmd_fit(fit_train, fit_out, fit_flags, fit_delta, out);
    if (*score) return cmd_score(score_model, score_features, score_out, score_delta, out);
    if (*eval) return cmd_eval(eval_ind, eval_ood, eval_tpr, eval_column, out);
    if (*tune) return cmd_tune(tune_train, tune_layer, tune_flags, out);
    if (*confusion) return cmd_confusion(conf_model, conf_features, conf_out, conf_bins, out);
    if (*joint) return cmd_joint_train(jt_config, jt_train, jt_input, jt_model, jt_trace, jt_backbone, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace laood::cli
