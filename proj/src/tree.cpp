#include "mcc/tree.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "mcc/rng.hpp"

namespace mcc {

namespace {

void check_node_consistency(const std::vector<InternalNode>& nodes, int num_classes) {
  for (const auto& node : nodes) {
    require(!node.one_branch.empty() && !node.zero_branch.empty(), ErrorKind::InvalidArgument,
            "internal node with an empty branch");
    std::vector<int> merged;
    std::ranges::merge(node.one_branch, node.zero_branch, std::back_inserter(merged));
    require(merged == node.subset, ErrorKind::InvalidArgument,
            "node branches do not partition its subset");
  }
  require(static_cast<int>(nodes.size()) == num_classes - 1, ErrorKind::InvalidArgument,
          "tree must have exactly K-1 internal nodes");
}

}  // namespace

ClassTree::ClassTree(int num_classes, std::vector<InternalNode> nodes)
    : num_classes_(num_classes), nodes_(std::move(nodes)) {
  require(num_classes_ >= 2, ErrorKind::InvalidK, "need at least 2 classes");
  check_node_consistency(nodes_, num_classes_);

  codewords_.assign(num_classes_, {});
  paths_.assign(num_classes_, {});
  std::vector<char> seen(num_classes_, 0);

  // Walk from the root accumulating (node, bit) paths. Node 0 is the root by
  // the pre-order convention.
  struct Frame {
    int node;
    std::string prefix;
    std::vector<std::pair<int, bool>> path;
  };
  std::vector<Frame> stack{{0, "", {}}};
  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    const InternalNode& node = nodes_[frame.node];
    for (bool bit : {true, false}) {
      const TreeChild& child = bit ? node.one_child : node.zero_child;
      Frame next{child.index, frame.prefix + (bit ? '1' : '0'), frame.path};
      next.path.emplace_back(frame.node, bit);
      if (child.is_leaf) {
        int c = child.index;
        require(c >= 0 && c < num_classes_, ErrorKind::MissingClass, "leaf class out of range");
        require(!seen[c], ErrorKind::DuplicateClass, "class appears in two leaves");
        seen[c] = 1;
        codewords_[c] = std::move(next.prefix);
        paths_[c] = std::move(next.path);
      } else {
        stack.push_back(std::move(next));
      }
    }
  }
  for (int c = 0; c < num_classes_; ++c) {
    require(seen[c], ErrorKind::MissingClass, "class " + std::to_string(c) + " has no leaf");
    depth_ = std::max(depth_, static_cast<int>(codewords_[c].size()));
  }
}

bool ClassTree::same_shape(const ClassTree& other) const {
  if (num_classes_ != other.num_classes_ || nodes_.size() != other.nodes_.size()) return false;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    if (nodes_[j].subset != other.nodes_[j].subset ||
        nodes_[j].one_branch != other.nodes_[j].one_branch) {
      return false;
    }
  }
  return true;
}

namespace {

// Recursive builder shared by the tree constructors: splits `classes` into
// (one side, zero side) via `split`, emitting nodes in pre-order.
template <typename SplitFn>
TreeChild build_recursive(const std::vector<int>& classes, std::vector<InternalNode>& nodes,
                          const SplitFn& split) {
  if (classes.size() == 1) return TreeChild{true, classes.front()};
  auto [one_side, zero_side] = split(classes);
  int self = static_cast<int>(nodes.size());
  nodes.emplace_back();
  {
    InternalNode& node = nodes[self];
    node.subset = classes;
    node.one_branch = one_side;
    node.zero_branch = zero_side;
    std::ranges::sort(node.subset);
    std::ranges::sort(node.one_branch);
    std::ranges::sort(node.zero_branch);
  }
  TreeChild one_child = build_recursive(one_side, nodes, split);
  nodes[self].one_child = one_child;
  TreeChild zero_child = build_recursive(zero_side, nodes, split);
  nodes[self].zero_child = zero_child;
  return TreeChild{false, self};
}

}  // namespace

ClassTree build_cova_tree(int num_classes) {
  require(num_classes >= 2, ErrorKind::InvalidK, "COVA tree needs K >= 2");
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  std::vector<InternalNode> nodes;
  build_recursive(classes, nodes, [](const std::vector<int>& subset) {
    return std::pair{std::vector<int>{subset.front()},
                     std::vector<int>(subset.begin() + 1, subset.end())};
  });
  return ClassTree(num_classes, std::move(nodes));
}

ClassTree build_balanced_tree(int num_classes, const std::vector<int>* order) {
  require(num_classes >= 2, ErrorKind::InvalidK, "balanced tree needs K >= 2");
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  if (order != nullptr) {
    std::vector<int> sorted = *order;
    std::ranges::sort(sorted);
    require(sorted == classes, ErrorKind::InvalidPermutation,
            "order must be a permutation of 0..K-1");
    classes = *order;
  }
  std::vector<InternalNode> nodes;
  build_recursive(classes, nodes, [](const std::vector<int>& subset) {
    std::size_t half = (subset.size() + 1) / 2;
    return std::pair{std::vector<int>(subset.begin(), subset.begin() + half),
                     std::vector<int>(subset.begin() + half, subset.end())};
  });
  return ClassTree(num_classes, std::move(nodes));
}

namespace {

struct Parser {
  const std::string& text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  char peek() {
    skip_ws();
    require(pos < text.size(), ErrorKind::ParseError, "unexpected end of tree expression");
    return text[pos];
  }

  // Returns the classes of the parsed subtree and its child handle.
  std::pair<std::vector<int>, TreeChild> parse_expr(std::vector<InternalNode>& nodes) {
    char c = peek();
    if (c == '(') {
      ++pos;
      int self = static_cast<int>(nodes.size());
      nodes.emplace_back();
      auto [one_classes, one_child] = parse_expr(nodes);
      auto [zero_classes, zero_child] = parse_expr(nodes);
      skip_ws();
      require(pos < text.size() && text[pos] == ')', ErrorKind::ParseError,
              "expected ')' in tree expression");
      ++pos;
      std::vector<int> all = one_classes;
      all.insert(all.end(), zero_classes.begin(), zero_classes.end());
      InternalNode& node = nodes[self];
      node.one_branch = std::move(one_classes);
      node.zero_branch = std::move(zero_classes);
      node.subset = all;
      std::ranges::sort(node.subset);
      std::ranges::sort(node.one_branch);
      std::ranges::sort(node.zero_branch);
      node.one_child = one_child;
      node.zero_child = zero_child;
      return {std::move(all), TreeChild{false, self}};
    }
    require(std::isdigit(static_cast<unsigned char>(c)), ErrorKind::ParseError,
            std::string("unexpected character '") + c + "' in tree expression");
    int value = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      value = value * 10 + (text[pos] - '0');
      ++pos;
    }
    return {{value}, TreeChild{true, value}};
  }
};

}  // namespace

ClassTree parse_tree(const std::string& text) {
  Parser parser{text};
  require(parser.peek() == '(', ErrorKind::ParseError, "tree expression must start with '('");
  std::vector<InternalNode> nodes;
  auto [classes, root] = parser.parse_expr(nodes);
  parser.skip_ws();
  require(parser.pos == text.size(), ErrorKind::ParseError,
          "trailing characters after tree expression");
  require(!root.is_leaf, ErrorKind::ParseError, "tree expression is a bare leaf");

  std::vector<int> sorted = classes;
  std::ranges::sort(sorted);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    require(sorted[i] != sorted[i + 1], ErrorKind::DuplicateClass,
            "class " + std::to_string(sorted[i]) + " appears twice");
  }
  int num_classes = static_cast<int>(classes.size());
  for (int i = 0; i < num_classes; ++i) {
    require(sorted[i] == i, ErrorKind::MissingClass,
            "classes must be exactly 0.." + std::to_string(num_classes - 1));
  }
  return ClassTree(num_classes, std::move(nodes));
}

namespace {

void serialize_child(const ClassTree& tree, const TreeChild& child, std::string& out) {
  if (child.is_leaf) {
    out += std::to_string(child.index);
    return;
  }
  const InternalNode& node = tree.node(child.index);
  out += '(';
  serialize_child(tree, node.one_child, out);
  out += ' ';
  serialize_child(tree, node.zero_child, out);
  out += ')';
}

}  // namespace

std::string serialize_tree(const ClassTree& tree) {
  std::string out;
  serialize_child(tree, TreeChild{false, 0}, out);
  return out;
}

void induce_node_probs_row(const ClassTree& tree, std::span<const double> p,
                           std::span<double> values_out) {
  for (int j = 0; j < tree.num_nodes(); ++j) {
    const InternalNode& node = tree.node(j);
    double one_mass = 0.0, total = 0.0;
    for (int c : node.one_branch) one_mass += p[c];
    for (int c : node.subset) total += p[c];
    values_out[j] = total > 0.0 ? one_mass / total : 0.0;
  }
}

NodeProbabilities induce_node_probs(const ClassTree& tree, const Categorical& p) {
  require(p.size() == tree.num_classes(), ErrorKind::LengthMismatch,
          "distribution length does not match the tree");
  NodeProbabilities values(tree.num_nodes());
  induce_node_probs_row(tree, p.probs(), values);
  return values;
}

void compose_raw_row(const ClassTree& tree, std::span<const double> node_values,
                     std::span<double> class_probs_out) {
  for (int c = 0; c < tree.num_classes(); ++c) {
    double prob = 1.0;
    for (auto [node, bit] : tree.path(c)) {
      prob *= bit ? node_values[node] : 1.0 - node_values[node];
    }
    class_probs_out[c] = prob;
  }
}

std::vector<double> compose_raw(const ClassTree& tree, const NodeProbabilities& nodes) {
  require(static_cast<int>(nodes.size()) == tree.num_nodes(), ErrorKind::LengthMismatch,
          "node value count does not match the tree");
  std::vector<double> probs(tree.num_classes());
  compose_raw_row(tree, nodes, probs);
  return probs;
}

Categorical compose_from_nodes(const ClassTree& tree, const NodeProbabilities& nodes) {
  return Categorical(compose_raw(tree, nodes));
}

ClassTree sample_random_tree(rng::Stream& stream, int num_classes) {
  require(num_classes >= 2, ErrorKind::InvalidK, "random tree needs K >= 2");
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  std::vector<InternalNode> nodes;
  build_recursive(classes, nodes, [&stream](const std::vector<int>& subset) {
    std::vector<int> one_side, zero_side;
    while (true) {
      one_side.clear();
      zero_side.clear();
      for (int c : subset) (stream.next() & 1 ? one_side : zero_side).push_back(c);
      if (!one_side.empty() && !zero_side.empty()) break;
    }
    return std::pair{one_side, zero_side};
  });
  return ClassTree(num_classes, std::move(nodes));
}

std::vector<double> node_reach_probs(const ClassTree& tree, const Categorical& p) {
  require(p.size() == tree.num_classes(), ErrorKind::LengthMismatch,
          "distribution length does not match the tree");
  std::vector<double> reach(tree.num_nodes());
  for (int j = 0; j < tree.num_nodes(); ++j) {
    double total = 0.0;
    for (int c : tree.node(j).subset) total += p[c];
    reach[j] = total;
  }
  return reach;
}

}  // namespace mcc
