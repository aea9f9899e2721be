#include "mcc/scorer.hpp"

#include <algorithm>
#include <cmath>

namespace mcc {

double LogisticScorer::score(std::span<const double> x) const {
  double z = dot(weights_, x);
  // Evaluate the saturating branch through exp(-|z|) so neither side overflows.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

OvaScorer::OvaScorer(std::vector<BinaryScorerPtr> binaries) : binaries_(std::move(binaries)) {
  require(binaries_.size() >= 2, ErrorKind::InvalidArgument, "OVA needs at least 2 scorers");
  for (const auto& scorer : binaries_) {
    require(scorer != nullptr, ErrorKind::InvalidArgument, "null OVA component");
  }
}

void OvaScorer::score_row(std::span<const double> x, std::span<double> out) const {
  double total = 0.0;
  for (std::size_t i = 0; i < binaries_.size(); ++i) {
    out[i] = binaries_[i]->score(x);
    total += out[i];
  }
  if (total <= 0.0) {
    fallbacks_.fetch_add(1, std::memory_order_relaxed);
    std::ranges::fill(out, 1.0 / static_cast<double>(out.size()));
    return;
  }
  for (double& v : out) v /= total;
}

HierarchicalScorer::HierarchicalScorer(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers)
    : tree_(std::move(tree)), node_scorers_(std::move(node_scorers)) {
  require(static_cast<int>(node_scorers_.size()) == tree_.num_nodes(), ErrorKind::AlignmentMismatch,
          "need one scorer per internal node");
  for (const auto& scorer : node_scorers_) {
    require(scorer != nullptr, ErrorKind::InvalidArgument, "null node scorer");
  }
}

void HierarchicalScorer::score_row(std::span<const double> x, std::span<double> out) const {
  NodeProbabilities values(node_scorers_.size());
  for (std::size_t j = 0; j < node_scorers_.size(); ++j) values[j] = node_scorers_[j]->score(x);
  compose_raw_row(tree_, values, out);
}

SoftmaxScorer::SoftmaxScorer(SoftmaxParams params) : params_(std::move(params)) {
  require(params_.num_classes() >= 2, ErrorKind::InvalidArgument, "softmax needs K >= 2");
  for (std::int64_t i = 0; i < params_.betas.size(); ++i) {
    require(std::isfinite(params_.betas.data()[i]), ErrorKind::InvalidArgument,
            "non-finite softmax weight");
  }
}

void SoftmaxScorer::score_row(std::span<const double> x, std::span<double> out) const {
  const int k = params_.num_classes();
  double max_z = -HUGE_VAL;
  for (int j = 0; j < k; ++j) {
    out[j] = dot(params_.betas.row(j), x);
    max_z = std::max(max_z, out[j]);
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    out[j] = std::exp(out[j] - max_z);
    total += out[j];
  }
  for (int j = 0; j < k; ++j) out[j] /= total;
}

MulticlassScorerPtr ova_compose(std::vector<BinaryScorerPtr> binaries) {
  return std::make_shared<OvaScorer>(std::move(binaries));
}

MulticlassScorerPtr hierarchical_compose(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers) {
  return std::make_shared<HierarchicalScorer>(std::move(tree), std::move(node_scorers));
}

MulticlassScorerPtr softmax_scorer(SoftmaxParams params) {
  return std::make_shared<SoftmaxScorer>(std::move(params));
}

namespace detail {

double subset_exp_ratio(std::span<const double> scores, std::span<const int> one_positions) {
  double max_z = -HUGE_VAL;
  for (double z : scores) max_z = std::max(max_z, z);
  double total = 0.0;
  for (double z : scores) total += std::exp(z - max_z);
  double one_mass = 0.0;
  for (int pos : one_positions) one_mass += std::exp(scores[pos] - max_z);
  return one_mass / total;
}

// Positions (within the sorted subset) of the classes on the bit-1 branch.
std::vector<int> one_positions_for(const InternalNode& node) {
  std::vector<int> positions;
  positions.reserve(node.one_branch.size());
  for (std::size_t pos = 0; pos < node.subset.size(); ++pos) {
    if (std::ranges::binary_search(node.one_branch, node.subset[pos])) {
      positions.push_back(static_cast<int>(pos));
    }
  }
  return positions;
}

class ProjectedNodeScorer : public BinaryScorer {
 public:
  ProjectedNodeScorer(std::shared_ptr<const SoftmaxParams> params, std::vector<int> subset,
                      std::vector<int> one_positions)
      : params_(std::move(params)), subset_(std::move(subset)),
        one_positions_(std::move(one_positions)) {}

  double score(std::span<const double> x) const override {
    std::vector<double> scores(subset_.size());
    for (std::size_t i = 0; i < subset_.size(); ++i) {
      scores[i] = dot(params_->betas.row(subset_[i]), x);
    }
    return subset_exp_ratio(scores, one_positions_);
  }

 private:
  std::shared_ptr<const SoftmaxParams> params_;
  std::vector<int> subset_;
  std::vector<int> one_positions_;
};

class LeveragedNodeScorerImpl : public BinaryScorer {
 public:
  LeveragedNodeScorerImpl(std::shared_ptr<const LeveragedParams> params, int node,
                          std::vector<int> one_positions)
      : params_(std::move(params)), node_(node), one_positions_(std::move(one_positions)) {}

  double score(std::span<const double> x) const override {
    const Matrix& gammas = params_->nodes[node_].gammas;
    std::vector<double> scores(gammas.rows());
    for (std::int64_t i = 0; i < gammas.rows(); ++i) scores[i] = dot(gammas.row(i), x);
    return subset_exp_ratio(scores, one_positions_);
  }

 private:
  std::shared_ptr<const LeveragedParams> params_;
  int node_;
  std::vector<int> one_positions_;
};

}  // namespace detail

BinaryScorerPtr project_softmax_to_node(std::shared_ptr<const SoftmaxParams> params,
                                        const ClassTree& tree, int node) {
  require(node >= 0 && node < tree.num_nodes(), ErrorKind::InvalidArgument, "node out of range");
  require(params->num_classes() == tree.num_classes(), ErrorKind::AlignmentMismatch,
          "softmax class count does not match the tree");
  const InternalNode& n = tree.node(node);
  return std::make_shared<detail::ProjectedNodeScorer>(std::move(params), n.subset,
                                                       detail::one_positions_for(n));
}

BinaryScorerPtr leveraged_node_scorer(std::shared_ptr<const LeveragedParams> params,
                                      const ClassTree& tree, int node) {
  require(node >= 0 && node < tree.num_nodes(), ErrorKind::InvalidArgument, "node out of range");
  require(static_cast<int>(params->nodes.size()) == tree.num_nodes(), ErrorKind::AlignmentMismatch,
          "leveraged params do not match the tree");
  const InternalNode& n = tree.node(node);
  require(params->nodes[node].classes == n.subset, ErrorKind::MissingClassParam,
          "node params must cover exactly the node subset");
  return std::make_shared<detail::LeveragedNodeScorerImpl>(std::move(params), node,
                                                           detail::one_positions_for(n));
}

MulticlassScorerPtr leveraged_scorer(ClassTree tree, std::shared_ptr<const LeveragedParams> params) {
  std::vector<BinaryScorerPtr> scorers;
  scorers.reserve(tree.num_nodes());
  for (int j = 0; j < tree.num_nodes(); ++j) {
    scorers.push_back(leveraged_node_scorer(params, tree, j));
  }
  return hierarchical_compose(std::move(tree), std::move(scorers));
}

LeveragedParams tie_to_softmax(const SoftmaxParams& params, const ClassTree& tree) {
  require(params.num_classes() == tree.num_classes(), ErrorKind::AlignmentMismatch,
          "softmax class count does not match the tree");
  LeveragedParams out;
  out.num_classes = tree.num_classes();
  out.nodes.resize(tree.num_nodes());
  for (int j = 0; j < tree.num_nodes(); ++j) {
    const InternalNode& node = tree.node(j);
    NodeParams& np = out.nodes[j];
    np.classes = node.subset;
    np.gammas = Matrix(static_cast<std::int64_t>(node.subset.size()), params.dim());
    for (std::size_t i = 0; i < node.subset.size(); ++i) {
      std::ranges::copy(params.betas.row(node.subset[i]), np.gammas.row(i).begin());
    }
  }
  return out;
}

}  // namespace mcc
