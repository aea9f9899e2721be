#pragma once

#include <functional>
#include <vector>

#include "mcc/data.hpp"
#include "mcc/scorer.hpp"
#include "mcc/tree.hpp"

namespace mcc {

// Plain mini-batch SGD with a constant learning rate. keep_best returns the
// end-of-epoch checkpoint (including the initialization) with the lowest
// full-trainset loss, which makes "training never hurts" literally true.
struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 1;
  bool keep_best = true;
};

void validate(const TrainConfig& cfg);

// Per-node binary view of a dataset: the samples whose label falls in the
// node subset, relabeled 1 on the bit-1 branch. Rows reference the original
// feature matrix; original sample order is preserved.
struct NodeTrainSet {
  const Matrix* features = nullptr;
  std::vector<int> rows;
  std::vector<int> labels01;
  std::vector<int> classes;    // S_i, sorted (empty for plain indicator sets)
  std::vector<char> side_one;  // aligned with classes

  std::int64_t size() const { return static_cast<std::int64_t>(rows.size()); }
};

NodeTrainSet make_node_trainset(const LabeledDataset& data, const ClassTree& tree, int node);

// One-vs-all view: every sample, labeled 1 iff its class equals `class_id`.
NodeTrainSet make_indicator_trainset(const LabeledDataset& data, int class_id);

// Sigmoid scorer minimizing the empirical binary log-loss. If one binary
// label is absent the result degrades to a constant scorer at the clamped
// empirical frequency. `stream_index` selects the shuffle stream so nodes
// trained in any order (or concurrently) get identical results.
BinaryScorerPtr train_binary_logistic(const NodeTrainSet& data, const TrainConfig& cfg,
                                      rng::StreamTag tag = rng::kNodeTrain,
                                      std::uint64_t stream_index = 0);

SoftmaxParams train_softmax(const LabeledDataset& data, const TrainConfig& cfg);

// Mean loss / mean gradients of the untied node objective over the selected
// samples (empty = all). Gradient rows align with params.classes; everything
// is max-subtraction stabilized per sample.
struct NodeLossGrads {
  double loss = 0.0;
  Matrix grads;
};
NodeLossGrads node_loss_and_grads(const NodeParams& params, const NodeTrainSet& data,
                                  std::span<const std::int64_t> positions = {});
double node_loss(const NodeParams& params, const NodeTrainSet& data);

// Trains every node's parameter set independently on its own subset; nodes
// run concurrently. A softmax init ties gamma_ij = beta_j first, so zero
// epochs reproduce the softmax classifier exactly.
LeveragedParams train_leveraged(const LabeledDataset& data, const ClassTree& tree,
                                const SoftmaxParams& init, const TrainConfig& cfg);
LeveragedParams train_leveraged(const LabeledDataset& data, const ClassTree& tree,
                                LeveragedParams init, const TrainConfig& cfg);

// K independent one-vs-all logistic regressions / K-1 per-node regressions.
std::vector<BinaryScorerPtr> train_ova(const LabeledDataset& data, const TrainConfig& cfg);
std::vector<BinaryScorerPtr> train_hierarchical(const LabeledDataset& data, const ClassTree& tree,
                                                const TrainConfig& cfg);

// Softmax parameters matching exact posteriors (not labels): least-squares
// regression of the log-posterior-odds onto the intercept-augmented features.
// When the posterior family is realizable this lands at machine precision.
SoftmaxParams fit_softmax_to_posteriors(const Matrix& features, const Matrix& posteriors);

// Finite-difference gradient checking over random instances.
struct GradCheckInstance {
  std::function<double(std::span<const double> params, std::span<double> grad_out)> loss_and_grad;
  std::vector<double> params;
};
using GradCheckFactory = std::function<GradCheckInstance(std::uint64_t trial_seed)>;

struct GradCheckReport {
  int trials = 0;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

GradCheckReport check_gradients(const GradCheckFactory& factory, int trials, double step,
                                double tol, std::uint64_t seed);

// Randomized instances of the two training losses, for the checker.
GradCheckInstance make_node_loss_instance(std::uint64_t seed);
GradCheckInstance make_softmax_loss_instance(std::uint64_t seed);

// Mean multiclass cross-entropy and its gradient over the selected samples.
double softmax_loss_and_grads(const Matrix& betas, const Matrix& features,
                              const std::vector<int>& labels,
                              std::span<const std::int64_t> positions, Matrix* grads_out);

}  // namespace mcc
