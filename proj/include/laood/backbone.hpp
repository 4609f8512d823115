#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "laood/ensemble.hpp"
#include "laood/error.hpp"
#include "laood/kernel.hpp"
#include "laood/matrix.hpp"
#include "laood/preprocess.hpp"
#include "laood/pseudo_ood.hpp"
#include "laood/tuner.hpp"

namespace laood::backbone {

/// Small tanh MLP classifier whose hidden-layer outputs are exposed as
/// feature taps. layer_dims = {input, hidden_1 .. hidden_L, classes}.
///
/// All parameters live in one flat vector: for each affine layer l
/// (1 .. L+1) the row-major weight block (dims[l] x dims[l-1]) followed by
/// its bias (dims[l]).
class ToyBackbone {
 public:
  ToyBackbone() = default;
  /// Zero-initialized network.
  explicit ToyBackbone(std::vector<std::size_t> layer_dims);
  /// Uniform Glorot initialization from a seed; biases start at zero.
  static ToyBackbone random(std::vector<std::size_t> layer_dims, std::uint64_t seed);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_hidden() const { return dims_.size() - 2; }
  std::size_t num_classes() const { return dims_.back(); }
  std::size_t num_parameters() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Affine layer l in 1 .. L+1.
  double& weight(std::size_t l, std::size_t row, std::size_t col) { return params_[w_off_[l - 1] + row * dims_[l - 1] + col]; }
  double weight(std::size_t l, std::size_t row, std::size_t col) const { return params_[w_off_[l - 1] + row * dims_[l - 1] + col]; }
  double& bias(std::size_t l, std::size_t row) { return params_[b_off_[l - 1] + row]; }
  double bias(std::size_t l, std::size_t row) const { return params_[b_off_[l - 1] + row]; }

  std::size_t weight_offset(std::size_t l) const { return w_off_[l - 1]; }
  std::size_t bias_offset(std::size_t l) const { return b_off_[l - 1]; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> params_;
  std::vector<std::size_t> w_off_, b_off_;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<std::vector<double>> taps;  // post-activation output of each hidden layer
};

struct BatchForward {
  Matrix logits;
  std::vector<Matrix> taps;
};

ForwardResult forward(const ToyBackbone& bb, std::span<const double> x);
BatchForward forward_batch(const ToyBackbone& bb, const Matrix& X);

/// Mean softmax cross-entropy.
double cross_entropy(const Matrix& logits, std::span<const int> labels);
double accuracy(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels);

/// Frozen detector state of one tapped layer for the kernel penalty. Taps are
/// standardized with `stats` (treated as constants) before the kernel; empty
/// stats mean no standardization.
struct LayerRegularizer {
  std::vector<double> alphas;  // one per batch row
  kernel::KernelParams kernel;
  preprocess::StandardizeStats stats;
};

struct JointLoss {
  double ce = 0.0;
  double reg = 0.0;  // (lambda / 2L) * sum_l sum_ij a_i a_j k(z_i, z_j)
  double total() const { return ce + reg; }
};

JointLoss joint_loss_parts(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                           std::span<const LayerRegularizer> regs, double lambda);
double joint_loss(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                  std::span<const LayerRegularizer> regs, double lambda);

/// Analytic gradient of joint_loss with respect to the flat parameters.
std::vector<double> joint_grad(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels,
                               std::span<const LayerRegularizer> regs, double lambda);

/// Gradient of the cross-entropy term alone.
std::vector<double> cross_entropy_grad(const ToyBackbone& bb, const Matrix& X, std::span<const int> labels);
/// Gradient of the kernel penalty alone (rows of X indexed by the alphas).
std::vector<double> regularizer_grad(const ToyBackbone& bb, const Matrix& X, std::span<const LayerRegularizer> regs,
                                     double lambda);

/// Plain mini-batch gradient descent on cross-entropy. batch_size 0 = full batch.
void pretrain(ToyBackbone& bb, const Matrix& X, std::span<const int> labels, std::size_t epochs, double learning_rate,
              std::size_t batch_size, std::uint64_t seed);

struct JointConfig {
  double lambda = 0.1;
  std::size_t outer_iters = 3;
  std::size_t inner_epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t pretrain_epochs = 0;
  double convergence_tol = 1e-9;
  std::uint64_t seed = 0;
  tuner::TuneSpec tune;
  pseudo_ood::ShiftConfig shift;

  void validate() const;
};

/// Parses "key = value" lines ('#' starts a comment). Keys: lambda,
/// outer_iters, inner_epochs, learning_rate, batch_size, pretrain_epochs,
/// convergence_tol, seed, nu, gamma_grid (comma list), criterion, tune_ind,
/// solver_tol, k_neighbors, edge_threshold, shift_scale, hidden (comma list;
/// returned separately since it shapes the network).
struct JointConfigFile {
  JointConfig config;
  std::vector<std::size_t> hidden = {16, 16};
};
JointConfigFile parse_joint_config(std::istream& in);

struct TraceRow {
  std::size_t outer_iter = 0;
  std::string step;  // "init", "I" or "II"
  double joint_objective = 0.0;
  double ce_loss = 0.0;
  double reg_term = 0.0;
  double train_accuracy = 0.0;
};

std::string trace_to_csv(std::span<const TraceRow> trace);

struct JointResult {
  ToyBackbone backbone;
  ensemble::DetectorEnsemble detectors;
  std::vector<TraceRow> trace;
  std::vector<tuner::TuneResult> tuning;
  double baseline_accuracy = 0.0;
  double final_accuracy = 0.0;
};

/// Thrown when a detector fit fails mid-loop; keeps the trace recorded so far.
class JointTrainingError : public Error {
 public:
  JointTrainingError(const std::string& what, std::vector<TraceRow> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Alternating optimization of backbone and per-layer detectors.
/// Tuning (standardization stats, pseudo-OODs, gamma) happens once on the
/// starting taps; the loop then alternates Step I (gradient descent on the
/// joint loss with alphas frozen) and Step II (refit every detector on the
/// new taps).
JointResult train_alternating(ToyBackbone bb, const Matrix& X, std::span<const int> labels, const JointConfig& config);

/// Hidden-layer tap names used for detectors: hidden1 .. hiddenL.
std::string tap_name(std::size_t layer_index);

}  // namespace laood::backbone
