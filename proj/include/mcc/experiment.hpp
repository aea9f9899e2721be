#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mcc/data.hpp"
#include "mcc/model_io.hpp"
#include "mcc/train.hpp"
#include "mcc/verify.hpp"

namespace mcc {

// Exit-code contract shared with the CLI: 0 success, 2 configuration
// problems, 3 data problems, 4 verification failures.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitVerification = 4;

int exit_code_for(const Error& error);

// Resolves a tree source: "cova", "balanced", "balanced:<comma permutation>",
// an inline "(...)" expression, or a path to a file holding one.
ClassTree resolve_tree(const std::string& source, int num_classes);

// Scores the dataset and reports loss / zero-one error / regret (when the
// dataset carries exact posteriors).
LossReport evaluate_scorer(const MulticlassScorer& scorer, const LabeledDataset& data);

// Per-node diagnostics for tree-structured models: each node's empirical
// binary log-loss, its class-mass weight, and the weighted sum, which must
// reproduce the per-sample path total.
struct NodeLossEntry {
  int node = 0;
  double weight = 0.0;
  double binary_log_loss = 0.0;
};

struct NodeBreakdown {
  std::vector<NodeLossEntry> entries;
  double weighted_sum = 0.0;
  double path_total = 0.0;
  double gap = 0.0;
};

NodeBreakdown node_breakdown(const Model& model, const LabeledDataset& data);

struct GenConfig {
  GaussianMixtureSpec spec;
  std::int64_t train_n = 10000;
  std::int64_t test_n = 10000;
  std::string out_dir = ".";
  // When the IDX paths are set, gen converts those files into dataset
  // containers instead of sampling a mixture.
  std::string mnist_train_images;
  std::string mnist_train_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;
  int crop = 4;
};

struct TrainCmdConfig {
  std::string data_path;
  std::string method = "softmax";
  std::string tree_source;  // required for hierarchical / leveraged
  TrainConfig train;
  std::string out_dir = ".";
};

struct EvalCmdConfig {
  std::string model_path;
  std::string train_data;
  std::string test_data;
  std::string report_path;
  std::string format = "text";  // text | delimited
  std::string units = "nats";   // nats | bits (display only)
};

struct VerifyCmdConfig {
  std::vector<std::string> suite{"all"};
  int trials = 1000;
  std::uint64_t seed = 1;
  std::string report_path;
  bool inject_fault = false;
};

struct TreeCmdConfig {
  std::string source;
  int classes = 0;  // required for the builder sources
};

// Each command returns its exit code and writes human output to `log`.
int run_gen(const GenConfig& config, std::ostream& log);
int run_train(const TrainCmdConfig& config, std::ostream& log);
int run_eval(const EvalCmdConfig& config, std::ostream& log);
int run_verify(const VerifyCmdConfig& config, std::ostream& log);
int run_tree(const TreeCmdConfig& config, std::ostream& log);

// Model file name used by `train` inside the output directory.
std::string model_path_for(const std::string& out_dir, const std::string& method);

}  // namespace mcc
