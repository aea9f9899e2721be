#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcc/prob.hpp"

namespace mcc::rng {
class Stream;
}

namespace mcc {

// One bifurcation of a class subset. Children are either a class leaf or
// another internal node, referenced by index.
struct TreeChild {
  bool is_leaf = false;
  int index = -1;  // class id when leaf, node id otherwise
};

struct InternalNode {
  std::vector<int> subset;       // S_j, sorted
  std::vector<int> one_branch;   // S_j^1, sorted
  std::vector<int> zero_branch;  // S_j^0, sorted
  TreeChild one_child;
  TreeChild zero_child;
};

// Binary tree over classes 0..K-1 with exactly K-1 internal nodes, indexed in
// pre-order (node, then the bit-1 subtree, then the bit-0 subtree). Each class
// carries the prefix codeword spelled by the bits along its root path.
class ClassTree {
 public:
  ClassTree(int num_classes, std::vector<InternalNode> nodes);

  int num_classes() const { return num_classes_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const InternalNode& node(int j) const { return nodes_[j]; }
  const std::vector<InternalNode>& nodes() const { return nodes_; }

  const std::string& codeword(int class_id) const { return codewords_[class_id]; }
  // Root-to-leaf path of a class as (node index, bit) pairs.
  const std::vector<std::pair<int, bool>>& path(int class_id) const { return paths_[class_id]; }
  int depth() const { return depth_; }

  bool same_shape(const ClassTree& other) const;

 private:
  int num_classes_ = 0;
  std::vector<InternalNode> nodes_;
  std::vector<std::string> codewords_;
  std::vector<std::vector<std::pair<int, bool>>> paths_;
  int depth_ = 0;
};

// Per-node Bernoulli success values, index-aligned with ClassTree nodes.
using NodeProbabilities = std::vector<double>;

// Chain tree: node i separates class i from {i+1,...,K-1}.
ClassTree build_cova_tree(int num_classes);

// Recursive midpoint split of the (optionally permuted) class list; the first
// half takes bit 1. Depth is ceil(log2 K).
ClassTree build_balanced_tree(int num_classes, const std::vector<int>* order = nullptr);

// Parses "(A B)" expressions where A is the bit-1 subtree, B the bit-0
// subtree, and leaves are decimal class indices covering exactly 0..K-1.
ClassTree parse_tree(const std::string& text);

// Inverse of parse_tree: canonical single-space separators.
std::string serialize_tree(const ClassTree& tree);

// values[j] = P(S_j^1) / P(S_j); nodes with zero subset mass get 0.
NodeProbabilities induce_node_probs(const ClassTree& tree, const Categorical& p);

// Class probability = product along its codeword path of v (bit 1) or 1-v
// (bit 0). Always a valid distribution, no normalization involved.
Categorical compose_from_nodes(const ClassTree& tree, const NodeProbabilities& nodes);

// Raw path products without the Categorical validation; compose_from_nodes
// wraps this. Exposed so the sums-to-one property is observable directly.
std::vector<double> compose_raw(const ClassTree& tree, const NodeProbabilities& nodes);

// Entry j = P(Y in S_j); the root entry is always 1.
std::vector<double> node_reach_probs(const ClassTree& tree, const Categorical& p);

// As above but for a raw probability row (no Categorical construction).
void induce_node_probs_row(const ClassTree& tree, std::span<const double> p,
                           std::span<double> values_out);
void compose_raw_row(const ClassTree& tree, std::span<const double> node_values,
                     std::span<double> class_probs_out);

// Uniformly messy tree: recursive random nonempty bipartition of the class
// set, driven entirely by the stream.
ClassTree sample_random_tree(rng::Stream& stream, int num_classes);

}  // namespace mcc
