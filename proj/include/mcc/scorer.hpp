#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mcc/matrix.hpp"
#include "mcc/prob.hpp"
#include "mcc/tree.hpp"

namespace mcc {

// Evaluation contract for a single Bernoulli posterior estimate: feature
// vectors include the appended constant-1 intercept coordinate.
class BinaryScorer {
 public:
  virtual ~BinaryScorer() = default;
  virtual double score(std::span<const double> x) const = 0;
};

// Evaluation contract for a full class posterior estimate; writes one valid
// probability row per call.
class MulticlassScorer {
 public:
  virtual ~MulticlassScorer() = default;
  virtual int num_classes() const = 0;
  virtual void score_row(std::span<const double> x, std::span<double> out) const = 0;

  Categorical score(std::span<const double> x) const {
    std::vector<double> row(num_classes());
    score_row(x, row);
    return Categorical(std::move(row));
  }
};

using BinaryScorerPtr = std::shared_ptr<const BinaryScorer>;
using MulticlassScorerPtr = std::shared_ptr<const MulticlassScorer>;

// sigmoid(w . x); the workhorse binary classifier.
class LogisticScorer : public BinaryScorer {
 public:
  explicit LogisticScorer(std::vector<double> weights) : weights_(std::move(weights)) {}
  double score(std::span<const double> x) const override;
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

// Fallback for degenerate training data: a fixed success probability.
class ConstantScorer : public BinaryScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {}
  double score(std::span<const double>) const override { return value_; }
  double value() const { return value_; }

 private:
  double value_;
};

// Shared multiclass Softmax parameters: K weight vectors of length d+1.
struct SoftmaxParams {
  Matrix betas;  // K x (d+1)

  int num_classes() const { return static_cast<int>(betas.rows()); }
  int dim() const { return static_cast<int>(betas.cols()); }
};

// Untied per-node parameters: one weight vector per class of the node's
// subset, rows aligned with the sorted subset.
struct NodeParams {
  std::vector<int> classes;  // S_i, sorted
  Matrix gammas;             // |S_i| x (d+1)
};

struct LeveragedParams {
  std::vector<NodeParams> nodes;  // K-1, tree node order
  int num_classes = 0;

  int dim() const { return nodes.empty() ? 0 : static_cast<int>(nodes.front().gammas.cols()); }
};

// Normalized one-vs-all combination of K binary scorers. If every component
// reports exactly zero the output falls back to uniform and a diagnostic
// counter is bumped; the scorer stays logically immutable.
class OvaScorer : public MulticlassScorer {
 public:
  explicit OvaScorer(std::vector<BinaryScorerPtr> binaries);
  int num_classes() const override { return static_cast<int>(binaries_.size()); }
  void score_row(std::span<const double> x, std::span<double> out) const override;

  const std::vector<BinaryScorerPtr>& binaries() const { return binaries_; }
  std::int64_t fallback_count() const { return fallbacks_.load(); }

 private:
  std::vector<BinaryScorerPtr> binaries_;
  mutable std::atomic<std::int64_t> fallbacks_{0};
};

// Tree composition of K-1 node scorers; the output is a distribution by
// construction, no normalization happens.
class HierarchicalScorer : public MulticlassScorer {
 public:
  HierarchicalScorer(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers);
  int num_classes() const override { return tree_.num_classes(); }
  void score_row(std::span<const double> x, std::span<double> out) const override;

  const ClassTree& tree() const { return tree_; }
  const std::vector<BinaryScorerPtr>& node_scorers() const { return node_scorers_; }

 private:
  ClassTree tree_;
  std::vector<BinaryScorerPtr> node_scorers_;
};

class SoftmaxScorer : public MulticlassScorer {
 public:
  explicit SoftmaxScorer(SoftmaxParams params);
  int num_classes() const override { return params_.num_classes(); }
  void score_row(std::span<const double> x, std::span<double> out) const override;

  const SoftmaxParams& params() const { return params_; }

 private:
  SoftmaxParams params_;
};

MulticlassScorerPtr ova_compose(std::vector<BinaryScorerPtr> binaries);
MulticlassScorerPtr hierarchical_compose(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers);
MulticlassScorerPtr softmax_scorer(SoftmaxParams params);

// Binary scorer computing sum_{j in S1} exp(b_j.x) / sum_{j in S} exp(b_j.x),
// stabilized by max-subtraction over the node's subset.
BinaryScorerPtr project_softmax_to_node(std::shared_ptr<const SoftmaxParams> params,
                                        const ClassTree& tree, int node);

// Same ratio with the node's own untied weight vectors.
BinaryScorerPtr leveraged_node_scorer(std::shared_ptr<const LeveragedParams> params,
                                      const ClassTree& tree, int node);

// Full leveraged classifier: hierarchical composition of every node's scorer.
MulticlassScorerPtr leveraged_scorer(ClassTree tree, std::shared_ptr<const LeveragedParams> params);

// gamma_{ij} = beta_j for every node: the leveraged family member that
// reproduces the softmax classifier exactly.
LeveragedParams tie_to_softmax(const SoftmaxParams& params, const ClassTree& tree);

namespace detail {
// exp-ratio of a class subset against the max-shifted scores; shared by the
// softmax projection and the leveraged node scorer.
double subset_exp_ratio(std::span<const double> scores, std::span<const int> one_positions);
}  // namespace detail

}  // namespace mcc
