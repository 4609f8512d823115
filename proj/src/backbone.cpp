#include "laood/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "laood/ocsvm.hpp"
#include "laood/random.hpp"

namespace laood::backbone {

ToyBackbone::ToyBackbone(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 3) throw Error("backbone: need input, at least one hidden layer and an output layer");
  if (dims_.back() < 2) throw Error("backbone: need at least 2 output classes");
  for (std::size_t d : dims_)
    if (d == 0) throw Error("backbone: zero-width layer");
  std::size_t off = 0;
  for (std::size_t l = 1; l < dims_.size(); ++l) {
    w_off_.push_back(off);
    off += dims_[l] * dims_[l - 1];
    b_off_.push_back(off);
    off += dims_[l];
  }
  params_.assign(off, 0.0);
}

ToyBackbone ToyBackbone::random(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  ToyBackbone bb(std::move(layer_dims));
  Rng rng(seed);
  for (std::size_t l = 1; l < bb.dims_.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(bb.dims_[l] + bb.dims_[l - 1]));
    for (std::size_t r = 0; r < bb.dims_[l]; ++r)
      for (std::size_t c = 0; c < bb.dims_[l - 1]; ++c) bb.weight(l, r, c) = rng.uniform(-limit, limit);
  }
  return bb;
}

std::string tap_name(std::size_t layer_index) { return "hidden" + std::to_string(layer_index + 1); }

namespace {

// out = in * W_l^T + b_l
Matrix affine(const ToyBackbone& bb, std::size_t l, const Matrix& in) {
  const std::size_t rows = bb.layer_dims()[l], cols = bb.layer_dims()[l - 1];
  Matrix out(in.rows(), rows);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto x = in.row(i);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = bb.bias(l, r);
      for (std::size_t c = 0; c < cols; ++c) s += bb.weight(l, r, c) * x[c];
      out(i, r) = s;
    }
  }
  return out;
}

void check_labels(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels) {
  if (labels.size() != X.rows()) throw DimensionError("backbone: label count does not match rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= bb.num_classes())
      throw Error("backbone: label " + std::to_string(y) + " outside [0, " + std::to_string(bb.num_classes()) + ")");
}

void check_regs(const ToyBackbone& bb, const Matrix& X, std::span<const LayerRegularizer> regs) {
  if (regs.empty()) return;
  if (regs.size() != bb.num_hidden())
    throw DimensionError("backbone: expected " + std::to_string(bb.num_hidden()) + " layer regularizers, got " +
                         std::to_string(regs.size()));
  for (std::size_t l = 0; l < regs.size(); ++l) {
    if (regs[l].alphas.size() != X.rows())
      throw Error("backbone: layer " + std::to_string(l + 1) + " has " + std::to_string(regs[l].alphas.size()) +
                  " alphas for a batch of " + std::to_string(X.rows()));
    if (!regs[l].stats.mean.empty() && regs[l].stats.dim() != bb.layer_dims()[l + 1])
      throw DimensionError("backbone: layer " + std::to_string(l + 1) + " stats dimension mismatch");
    regs[l].kernel.validate();
  }
}

Matrix standardized(const Matrix& tap, const LayerRegularizer& reg) {
  return reg.stats.mean.empty() ? tap : preprocess::apply_stats(reg.stats, tap);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - mx));
  for (double& v : p) v /= z;
  return p;
}

// Accumulates parameter gradients given cotangents at the logits and at each tap.
std::vector<double> backprop(const ToyBackbone& bb, const Matrix& X, const BatchForward& fwd,
                             const Matrix* logit_cot, const std::vector<Matrix>* tap_cot) {
  const auto& dims = bb.layer_dims();
  const std::size_t L = bb.num_hidden();
  const std::size_t B = X.rows();
  std::vector<double> grad(bb.num_parameters(), 0.0);

  Matrix delta = logit_cot ? *logit_cot : Matrix(B, dims[L + 1], 0.0);
  for (std::size_t l = L + 1; l >= 1; --l) {
    const Matrix& input = l == 1 ? X : fwd.taps[l - 2];
    const std::size_t rows = dims[l], cols = dims[l - 1];
    const std::size_t wo = bb.weight_offset(l), bo = bb.bias_offset(l);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = delta(i, r);
        if (d == 0.0) continue;
        grad[bo + r] += d;
        for (std::size_t c = 0; c < cols; ++c) grad[wo + r * cols + c] += d * input(i, c);
      }
    if (l == 1) break;

    // cotangent at tap l-1 (post-activation), then through tanh
    Matrix next(B, cols, 0.0);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t c = 0; c < cols; ++c) {
        double g = tap_cot ? (*tap_cot)[l - 2](i, c) : 0.0;
        for (std::size_t r = 0; r < rows; ++r) g += delta(i, r) * bb.weight(l, r, c);
        const double a = fwd.taps[l - 2](i, c);
        next(i, c) = g * (1.0 - a * a);
      }
    delta = std::move(next);
  }
  return grad;
}

Matrix ce_logit_cotangent(const Matrix& logits, std::span<const int> labels) {
  const std::size_t B = logits.rows();
  Matrix cot(B, logits.cols());
  for (std::size_t i = 0; i < B; ++i) {
    const auto p = softmax(logits.row(i));
    for (std::size_t k = 0; k < p.size(); ++k)
      cot(i, k) = (p[k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(B);
  }
  return cot;
}

// Per-layer sum_ij a_i a_j k(z_i, z_j); optionally fills the cotangent at the raw tap.
double layer_penalty(const Matrix& tap, const LayerRegularizer& reg, double scale, Matrix* tap_cot) {
  const Matrix Z = standardized(tap, reg);
  const std::size_t n = Z.rows(), d = Z.cols();
  const double gamma = reg.kernel.gamma;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = reg.alphas[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double aj = reg.alphas[j];
      if (aj == 0.0) continue;
      const double k = kernel::rbf(Z.row(i), Z.row(j), reg.kernel);
      sum += ai * aj * k;
      if (tap_cot && i != j) {
        // d/dz_i of the (i,j) and (j,i) terms together: 2 a_i a_j (-2 gamma)(z_i - z_j) k
        const double w = scale * 2.0 * ai * aj * (-2.0 * gamma) * k;
        for (std::size_t c = 0; c < d; ++c) {
          const double sigma = reg.stats.mean.empty() ? 1.0 : reg.stats.std[c];
          (*tap_cot)(i, c) += w * (Z(i, c) - Z(j, c)) / sigma;
        }
      }
    }
  }
  return sum;
}

}  // namespace

BatchForward forward_batch(const ToyBackbone& bb, const Matrix& X) {
  if (X.cols() != bb.input_dim() && X.rows() > 0)
    throw DimensionError("backbone forward: expected input dimension " + std::to_string(bb.input_dim()) + ", got " +
                         std::to_string(X.cols()));
  BatchForward out;
  const Matrix* a = &X;
  for (std::size_t l = 1; l <= bb.num_hidden(); ++l) {
    Matrix h = affine(bb, l, *a);
    for (double& v : h.data()) v = std::tanh(v);
    out.taps.push_back(std::move(h));
    a = &out.taps.back();
  }
  out.logits = affine(bb, bb.num_hidden() + 1, *a);
  return out;
}

ForwardResult forward(const ToyBackbone& bb, std::span<const double> x) {
  if (x.size() != bb.input_dim())
    throw DimensionError("backbone forward: expected input dimension " + std::to_string(bb.input_dim()) + ", got " +
                         std::to_string(x.size()));
  Matrix X(1, x.size(), std::vector<double>(x.begin(), x.end()));
  BatchForward b = forward_batch(bb, X);
  ForwardResult r;
  r.logits.assign(b.logits.row(0).begin(), b.logits.row(0).end());
  for (const auto& t : b.taps) r.taps.emplace_back(t.row(0).begin(), t.row(0).end());
  return r;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("cross_entropy: label count does not match rows");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - mx);
    total += mx + std::log(lse) - z[static_cast<std::size_t>(labels[i])];
  }
  return logits.rows() ? total / static_cast<double>(logits.rows()) : 0.0;
}

double accuracy(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels) {
  check_labels(bb, X, labels);
  if (X.rows() == 0) return 0.0;
  const auto fwd = forward_batch(bb, X);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto z = fwd.logits.row(i);
    const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += pred == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(X.rows());
}

JointLoss joint_loss_parts(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                           std::span<const LayerRegularizer> regs, double lambda) {
  check_labels(bb, X, labels);
  check_regs(bb, X, regs);
  const auto fwd = forward_batch(bb, X);
  JointLoss loss;
  loss.ce = cross_entropy(fwd.logits, labels);
  if (lambda != 0.0 && !regs.empty()) {
    const double scale = lambda / (2.0 * static_cast<double>(bb.num_hidden()));
    double sum = 0.0;
    for (std::size_t l = 0; l < regs.size(); ++l) sum += layer_penalty(fwd.taps[l], regs[l], scale, nullptr);
    loss.reg = scale * sum;
  }
  return loss;
}

double joint_loss(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                  std::span<const LayerRegularizer> regs, double lambda) {
  return joint_loss_parts(bb, X, labels, regs, lambda).total();
}

std::vector<double> cross_entropy_grad(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels) {
  check_labels(bb, X, labels);
  const auto fwd = forward_batch(bb, X);
  const Matrix cot = ce_logit_cotangent(fwd.logits, labels);
  return backprop(bb, X, fwd, &cot, nullptr);
}

std::vector<double> regularizer_grad(const ToyBackbone& bb, const Matrix& X, std::span<const LayerRegularizer> regs,
                                     double lambda) {
  check_regs(bb, X, regs);
  if (lambda == 0.0 || regs.empty()) return std::vector<double>(bb.num_parameters(), 0.0);
  const auto fwd = forward_batch(bb, X);
  const double scale = lambda / (2.0 * static_cast<double>(bb.num_hidden()));
  std::vector<Matrix> tap_cot;
  for (std::size_t l = 0; l < regs.size(); ++l) {
    tap_cot.emplace_back(X.rows(), fwd.taps[l].cols(), 0.0);
    layer_penalty(fwd.taps[l], regs[l], scale, &tap_cot.back());
  }
  return backprop(bb, X, fwd, nullptr, &tap_cot);
}

std::vector<double> joint_grad(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                               std::span<const LayerRegularizer> regs, double lambda) {
  check_labels(bb, X, labels);
  check_regs(bb, X, regs);
  const auto fwd = forward_batch(bb, X);
  const Matrix cot = ce_logit_cotangent(fwd.logits, labels);
  if (lambda == 0.0 || regs.empty()) return backprop(bb, X, fwd, &cot, nullptr);

  const double scale = lambda / (2.0 * static_cast<double>(bb.num_hidden()));
  std::vector<Matrix> tap_cot;
  for (std::size_t l = 0; l < regs.size(); ++l) {
    tap_cot.emplace_back(X.rows(), fwd.taps[l].cols(), 0.0);
    layer_penalty(fwd.taps[l], regs[l], scale, &tap_cot.back());
  }
  return backprop(bb, X, fwd, &cot, &tap_cot);
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (batch_size == 0 || batch_size >= n) return {order};
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n; s += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch_size)));
  return batches;
}

std::vector<int> pick(std::span<const int> labels, const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = labels[idx[k]];
  return out;
}

void descend(ToyBackbone& bb, const std::vector<double>& grad, double lr) {
  auto p = bb.parameters();
  for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * grad[k];
}

}  // namespace

void pretrain(ToyBackbone& bb, const Matrix& X, std::span<const int> labels, std::size_t epochs, double learning_rate,
              std::size_t batch_size, std::uint64_t seed) {
  check_labels(bb, X, labels);
  Rng rng(seed);
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const auto& batch : make_batches(X.rows(), batch_size, rng)) {
      const Matrix Xb = X.select_rows(batch);
      descend(bb, cross_entropy_grad(bb, Xb, pick(labels, batch)), learning_rate);
    }
  }
}

void JointConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error("joint config: lambda must be nonnegative");
  if (inner_epochs == 0) throw Error("joint config: inner_epochs must be positive");
  if (!(learning_rate > 0.0)) throw Error("joint config: learning_rate must be positive");
  if (!(convergence_tol > 0.0)) throw Error("joint config: convergence_tol must be positive");
  tune.validate();
  shift.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
std::vector<T> parse_list(const std::string& v, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(conv(trim(item)));
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

std::size_t to_size(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
  return static_cast<std::size_t>(v);
}

}  // namespace

JointConfigFile parse_joint_config(std::istream& in) {
  JointConfigFile file;
  JointConfig& c = file.config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("line " + std::to_string(line_no), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "lambda") c.lambda = to_double(value);
      else if (key == "outer_iters") c.outer_iters = to_size(value);
      else if (key == "inner_epochs") c.inner_epochs = to_size(value);
      else if (key == "learning_rate") c.learning_rate = to_double(value);
      else if (key == "batch_size") c.batch_size = to_size(value);
      else if (key == "pretrain_epochs") c.pretrain_epochs = to_size(value);
      else if (key == "convergence_tol") c.convergence_tol = to_double(value);
      else if (key == "seed") c.seed = to_size(value);
      else if (key == "nu") c.tune.nu = to_double(value);
      else if (key == "gamma_grid") c.tune.gamma_grid = parse_list<double>(value, to_double);
      else if (key == "criterion") c.tune.criterion = tuner::parse_criterion(value);
      else if (key == "solver_tol") c.tune.solver_tol = to_double(value);
      else if (key == "tune_ind") c.tune.ind_side = tuner::parse_ind_side(value);
      else if (key == "k_neighbors") c.shift.k_neighbors = to_size(value);
      else if (key == "edge_threshold") c.shift.edge_threshold = to_double(value);
      else if (key == "shift_scale") c.shift.shift_scale = to_double(value);
      else if (key == "hidden") file.hidden = parse_list<std::size_t>(value, to_size);
      else throw FormatError(key, "unknown config key");
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception&) {
      throw FormatError(key, "invalid value '" + value + "' on line " + std::to_string(line_no));
    }
  }
  c.validate();
  return file;
}

std::string trace_to_csv(std::span<const TraceRow> trace) {
  std::string out = "outer_iter,step,joint_objective,ce_loss,reg_term,train_accuracy\n";
  char buf[256];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.9g,%.9g,%.9g,%.9g\n", r.outer_iter, r.step.c_str(), r.joint_objective,
                  r.ce_loss, r.reg_term, r.train_accuracy);
    out += buf;
  }
  return out;
}

namespace {

std::vector<LayerRegularizer> regularizers(const ensemble::DetectorEnsemble& ens) {
  std::vector<LayerRegularizer> regs;
  for (const auto& layer : ens.layers)
    regs.push_back({layer.model.dense_alphas(), layer.model.kernel, layer.stats});
  return regs;
}

TraceRow record(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                std::span<const LayerRegularizer> regs, double lambda, std::size_t outer, const char* step) {
  const JointLoss loss = joint_loss_parts(bb, X, labels, regs, lambda);
  return TraceRow{outer, step, loss.total(), loss.ce, loss.reg, accuracy(bb, X, labels)};
}

}  // namespace

JointResult train_alternating(ToyBackbone bb, const Matrix& X, std::span<const int> labels, const JointConfig& config) {
  config.validate();
  check_labels(bb, X, labels);
  if (X.rows() == 0) throw Error("train_alternating: empty dataset");

  JointResult res;
  if (config.pretrain_epochs > 0)
    pretrain(bb, X, labels, config.pretrain_epochs, config.learning_rate, config.batch_size, config.seed);
  res.baseline_accuracy = accuracy(bb, X, labels);

  // Tuning on the starting taps: stats, pseudo-OODs and gamma stay fixed afterwards.
  const std::size_t L = bb.num_hidden();
  {
    auto fwd = forward_batch(bb, X);
    for (std::size_t l = 0; l < L; ++l) {
      auto built = ensemble::build_layer(tap_name(l), fwd.taps[l], config.tune, config.shift);
      res.tuning.push_back(built.tuning);
      res.detectors.layers.push_back(std::move(built.detector));
    }
  }
  auto regs = regularizers(res.detectors);
  res.trace.push_back(record(bb, X, labels, regs, config.lambda, 0, "init"));

  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  double previous = res.trace.back().joint_objective;
  for (std::size_t outer = 1; outer <= config.outer_iters; ++outer) {
    // Step I: only rows with a nonzero alpha in some layer enter the penalty.
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (const auto& r : regs)
        if (r.alphas[i] != 0.0) {
          active.push_back(i);
          break;
        }
    const Matrix X_active = X.select_rows(active);
    std::vector<LayerRegularizer> active_regs = regs;
    for (auto& r : active_regs) {
      std::vector<double> sub(active.size());
      for (std::size_t k = 0; k < active.size(); ++k) sub[k] = r.alphas[active[k]];
      r.alphas = std::move(sub);
    }
    for (std::size_t e = 0; e < config.inner_epochs; ++e) {
      for (const auto& batch : make_batches(X.rows(), config.batch_size, rng)) {
        auto grad = cross_entropy_grad(bb, X.select_rows(batch), pick(labels, batch));
        if (config.lambda != 0.0) {
          const auto g_reg = regularizer_grad(bb, X_active, active_regs, config.lambda);
          for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g_reg[k];
        }
        descend(bb, grad, config.learning_rate);
      }
    }
    res.trace.push_back(record(bb, X, labels, regs, config.lambda, outer, "I"));

    // Step II
    try {
      auto fwd = forward_batch(bb, X);
      for (std::size_t l = 0; l < L; ++l) {
        const auto& old = res.detectors.layers[l];
        res.detectors.layers[l] = ensemble::fit_layer(old.name, old.stats, fwd.taps[l], config.tune.nu,
                                                      old.model.kernel.gamma, config.tune.solver_tol);
      }
    } catch (const std::exception& e) {
      throw JointTrainingError(std::string("train_alternating: Step II failed at outer iteration ") +
                                   std::to_string(outer) + ": " + e.what(),
                               res.trace);
    }
    regs = regularizers(res.detectors);
    res.trace.push_back(record(bb, X, labels, regs, config.lambda, outer, "II"));

    const double current = res.trace.back().joint_objective;
    if (previous - current < config.convergence_tol) break;
    previous = current;
  }

  res.final_accuracy = accuracy(bb, X, labels);
  res.backbone = std::move(bb);
  res.detectors.validate();
  return res;
}

}  // namespace laood::backbone
