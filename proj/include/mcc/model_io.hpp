#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcc/scorer.hpp"
#include "mcc/tree.hpp"

namespace mcc {

enum class ModelKind { Softmax, Ova, Hierarchical, Leveraged };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// A trained classifier plus everything needed to re-instantiate it: kind,
// shape, the tree (when any), and the raw weight vectors. Binary components
// are either logistic scorers or constant fallbacks.
struct Model {
  ModelKind kind = ModelKind::Softmax;
  int num_classes = 0;
  int dim = 0;  // feature length including the intercept coordinate
  std::optional<ClassTree> tree;
  SoftmaxParams softmax;
  std::vector<BinaryScorerPtr> binaries;  // ova / hierarchical components
  std::shared_ptr<const LeveragedParams> leveraged;

  MulticlassScorerPtr scorer() const;
};

Model make_softmax_model(SoftmaxParams params);
Model make_ova_model(std::vector<BinaryScorerPtr> binaries, int dim);
Model make_hierarchical_model(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers, int dim);
Model make_leveraged_model(ClassTree tree, LeveragedParams params);

// Container file: plain-text header naming the dimensions, then the weight
// vectors as raw little-endian 64-bit floats. Round-trips are bit-exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace mcc
