#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcc/data.hpp"
#include "mcc/scorer.hpp"
#include "mcc/tree.hpp"

namespace mcc {

// One verified instance: a digest of the sampled inputs plus both sides of
// the identity/inequality, kept so reports are replayable.
struct TrialRecord {
  std::uint64_t digest = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct TheoremCheckResult {
  std::string name;
  int trials = 0;
  double tolerance = 0.0;
  bool equality = false;
  // For equalities: max |lhs - rhs|, pass iff <= tolerance. For inequalities:
  // max (lhs - rhs - tolerance), pass iff <= 0.
  double max_violation = 0.0;
  double max_slack = 0.0;  // max (rhs - lhs)
  bool pass = false;
  std::vector<TrialRecord> records;
  std::vector<std::pair<std::string, double>> extras;
  std::string violation_inputs;  // first offending instance, serialized
};

// Rethrows a failed result as an error carrying the offending inputs.
void throw_if_violated(const TheoremCheckResult& result);

// Strictly positive point on the simplex: normalized independent exponentials.
Categorical sample_simplex(rng::Stream& stream, int num_classes);

// Multiclass regret of the normalized OVA combination is at most the sum of
// the component binary regrets; the two proof components F1, F2 are recorded
// and must be individually nonnegative.
TheoremCheckResult check_ova_bound(int trials, int k_min, int k_max, std::uint64_t seed);

enum class DecompositionFault { None, RotateNodes };

// Exact identity: multiclass regret equals the reach-weighted sum of node
// binary regrets, for random (P, Q, tree). The fault knob mis-rotates the
// node indexing and exists as a self-test of the harness.
TheoremCheckResult check_tree_decomposition(int trials, int k_min, int k_max, std::uint64_t seed,
                                            DecompositionFault fault = DecompositionFault::None);

// Same identity on chain trees, with the node values computed from the
// conditional-indicator formula directly and cross-checked against the
// tree-induced ones at 1e-12.
TheoremCheckResult check_cova_decomposition(int trials, int k_min, int k_max, std::uint64_t seed);

// Unweighted sum of node regrets as the simple (loose) upper bound.
TheoremCheckResult check_dpi_loose_bound(int trials, int k_min, int k_max, std::uint64_t seed);

// Empirical plug-in of the conditional decomposition on a dataset carrying
// exact posteriors: both sides agree per sample, so the averages match.
TheoremCheckResult check_conditional_decomposition(const LabeledDataset& data,
                                                   const ClassTree& tree,
                                                   const MulticlassScorer& scorer);

// Excess zero-one error of the OVA argmax against the square-root bound built
// from the per-class empirical binary regrets, with a 3/sqrt(M) statistical
// allowance. Component scores are clamped to [1e-12, 1-1e-12] before the
// divergences, matching the evaluation clamp.
TheoremCheckResult check_pinsker_zero_one(const LabeledDataset& data, const OvaScorer& ova);

}  // namespace mcc
