#include "mcc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>

#include "mcc/batch.hpp"
#include "mcc/parallel.hpp"
#include "mcc/prob.hpp"

namespace mcc {

void throw_if_violated(const TheoremCheckResult& result) {
  if (result.pass) return;
  raise(ErrorKind::ViolationFound,
        result.name + " failed (max_violation=" + std::to_string(result.max_violation) +
            "); offending inputs: " + result.violation_inputs);
}

Categorical sample_simplex(rng::Stream& stream, int num_classes) {
  std::vector<double> p(num_classes);
  double total = 0.0;
  for (double& v : p) {
    v = -std::log(stream.uniform01());
    total += v;
  }
  for (double& v : p) v /= total;
  return Categorical(std::move(p));
}

namespace {

constexpr double kExactTol = 1e-10;
constexpr double kNodeEstimateDelta = 1e-6;

std::string format_doubles(std::span<const double> values) {
  std::ostringstream out;
  out.precision(17);
  out << '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << values[i];
  }
  out << ']';
  return out.str();
}

// Shared trial-loop plumbing: runs `body(trial, stream, record, serialized)`
// in parallel with per-trial streams, then reduces in index order.
template <typename Body>
TheoremCheckResult run_trials(std::string name, int trials, double tolerance, bool equality,
                              std::uint64_t seed, Body&& body) {
  require(trials >= 1, ErrorKind::InvalidArgument, "need at least one trial");
  TheoremCheckResult result;
  result.name = std::move(name);
  result.trials = trials;
  result.tolerance = tolerance;
  result.equality = equality;
  result.records.resize(trials);
  std::vector<std::string> serialized(trials);

  std::exception_ptr error;
  std::mutex error_mutex;
  parallel_for(trials, [&](std::int64_t t) {
    try {
      auto stream = rng::stream_for(seed, rng::kTrial, static_cast<std::uint64_t>(t));
      body(static_cast<int>(t), stream, result.records[t], serialized[t]);
    } catch (...) {
      std::scoped_lock lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  });
  if (error) std::rethrow_exception(error);

  result.max_violation = -HUGE_VAL;
  result.max_slack = -HUGE_VAL;
  int first_bad = -1;
  for (int t = 0; t < trials; ++t) {
    const TrialRecord& record = result.records[t];
    double gap = record.lhs - record.rhs;
    double violation = equality ? std::abs(gap) : gap - tolerance;
    if (violation > result.max_violation) result.max_violation = violation;
    result.max_slack = std::max(result.max_slack, -gap);
    bool bad = equality ? std::abs(gap) > tolerance : gap > tolerance;
    if (bad && first_bad < 0) first_bad = t;
  }
  result.pass = first_bad < 0;
  if (first_bad >= 0) result.violation_inputs = serialized[first_bad];
  return result;
}

int pick_k(rng::Stream& stream, int k_min, int k_max) {
  require(k_min >= 2 && k_max >= k_min, ErrorKind::InvalidArgument, "bad class range");
  return k_min + static_cast<int>(stream.below(static_cast<std::uint64_t>(k_max - k_min + 1)));
}

}  // namespace

TheoremCheckResult check_ova_bound(int trials, int k_min, int k_max, std::uint64_t seed) {
  std::vector<double> min_f1(trials), min_f2(trials);
  auto result = run_trials(
      "ova_bound", trials, kExactTol, /*equality=*/false, seed,
      [&](int t, rng::Stream& stream, TrialRecord& record, std::string& serialized) {
        const int k = pick_k(stream, k_min, k_max);
        Categorical p = sample_simplex(stream, k);
        std::vector<double> estimates(k);
        for (double& q : estimates) q = stream.uniform(kNodeEstimateDelta, 1.0 - kNodeEstimateDelta);

        double alpha = 0.0;
        for (double q : estimates) alpha += q;
        alpha /= k;
        std::vector<double> normalized(k);
        for (int i = 0; i < k; ++i) normalized[i] = estimates[i] / (alpha * k);
        Categorical q_ova(normalized);

        record.lhs = kl_divergence(p, q_ova);
        double rhs = 0.0, f1 = 0.0;
        for (int i = 0; i < k; ++i) {
          rhs += binary_divergence(p[i], estimates[i]);
          f1 += (1.0 - p[i]) * std::log((1.0 - p[i]) / (1.0 - estimates[i]));
        }
        f1 -= (k - 1) * std::log((k - 1) / (k * (1.0 - alpha)));
        double f2 = k * binary_divergence(1.0 / k, alpha);
        record.rhs = rhs;
        min_f1[t] = f1;
        min_f2[t] = f2;

        record.digest = fnv1a_doubles(p.probs());
        record.digest = fnv1a_doubles(estimates, record.digest);
        serialized = "{\"K\":" + std::to_string(k) + ",\"P\":" + format_doubles(p.probs()) +
                     ",\"q\":" + format_doubles(estimates) + "}";
      });

  double worst_f1 = *std::ranges::min_element(min_f1);
  double worst_f2 = *std::ranges::min_element(min_f2);
  result.extras.emplace_back("min_F1", worst_f1);
  result.extras.emplace_back("min_F2", worst_f2);
  if (worst_f1 < -kExactTol || worst_f2 < -kExactTol) {
    result.pass = false;
    if (result.violation_inputs.empty()) result.violation_inputs = "negative proof component";
  }
  return result;
}

namespace {

struct DecompositionSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

DecompositionSides decomposition_sides(const ClassTree& tree, const Categorical& p,
                                       const Categorical& q, bool weighted,
                                       DecompositionFault fault) {
  DecompositionSides sides;
  sides.lhs = kl_divergence(p, q);
  NodeProbabilities p_nodes = induce_node_probs(tree, p);
  NodeProbabilities q_nodes = induce_node_probs(tree, q);
  if (fault == DecompositionFault::RotateNodes && tree.num_nodes() > 1) {
    std::rotate(q_nodes.begin(), q_nodes.begin() + 1, q_nodes.end());
  }
  std::vector<double> weights = node_reach_probs(tree, p);
  for (int j = 0; j < tree.num_nodes(); ++j) {
    sides.rhs += (weighted ? weights[j] : 1.0) * binary_divergence(p_nodes[j], q_nodes[j]);
  }
  return sides;
}

}  // namespace

TheoremCheckResult check_tree_decomposition(int trials, int k_min, int k_max, std::uint64_t seed,
                                            DecompositionFault fault) {
  return run_trials(
      "tree_decomposition", trials, kExactTol, /*equality=*/true, seed,
      [&](int, rng::Stream& stream, TrialRecord& record, std::string& serialized) {
        const int k = pick_k(stream, k_min, k_max);
        Categorical p = sample_simplex(stream, k);
        Categorical q = sample_simplex(stream, k);
        ClassTree tree = sample_random_tree(stream, k);
        auto sides = decomposition_sides(tree, p, q, /*weighted=*/true, fault);
        record.lhs = sides.lhs;
        record.rhs = sides.rhs;
        std::string tree_text = serialize_tree(tree);
        record.digest = fnv1a_doubles(p.probs());
        record.digest = fnv1a_doubles(q.probs(), record.digest);
        record.digest = fnv1a(
            {reinterpret_cast<const unsigned char*>(tree_text.data()), tree_text.size()},
            record.digest);
        serialized = "{\"K\":" + std::to_string(k) + ",\"P\":" + format_doubles(p.probs()) +
                     ",\"Q\":" + format_doubles(q.probs()) + ",\"tree\":\"" + tree_text + "\"}";
      });
}

TheoremCheckResult check_cova_decomposition(int trials, int k_min, int k_max, std::uint64_t seed) {
  std::vector<double> formula_gaps(trials, 0.0);
  auto result = run_trials(
      "cova_decomposition", trials, kExactTol, /*equality=*/true, seed,
      [&](int t, rng::Stream& stream, TrialRecord& record, std::string& serialized) {
        const int k = pick_k(stream, k_min, k_max);
        Categorical p = sample_simplex(stream, k);
        Categorical q = sample_simplex(stream, k);
        ClassTree tree = build_cova_tree(k);

        // Node values straight from the conditional-indicator definition:
        // value_i = P(i) / P(Y >= i), cross-checked against the tree route.
        // Tails are right-to-left suffix sums; subtracting prefixes instead
        // cancels badly once the tail mass gets small.
        NodeProbabilities p_induced = induce_node_probs(tree, p);
        NodeProbabilities q_induced = induce_node_probs(tree, q);
        std::vector<double> tail_p(k + 1, 0.0), tail_q(k + 1, 0.0);
        for (int i = k - 1; i >= 0; --i) {
          tail_p[i] = tail_p[i + 1] + p[i];
          tail_q[i] = tail_q[i + 1] + q[i];
        }
        double rhs = 0.0, max_gap = 0.0;
        for (int i = 0; i < k - 1; ++i) {
          double p_cond = p[i] / tail_p[i];
          double q_cond = q[i] / tail_q[i];
          max_gap = std::max({max_gap, std::abs(p_cond - p_induced[i]),
                              std::abs(q_cond - q_induced[i])});
          rhs += tail_p[i] * binary_divergence(p_cond, q_cond);
        }
        require(max_gap <= 1e-12, ErrorKind::FormulaMismatch,
                "conditional formula and tree-induced node values disagree by " +
                    std::to_string(max_gap));
        formula_gaps[t] = max_gap;

        record.lhs = kl_divergence(p, q);
        record.rhs = rhs;
        record.digest = fnv1a_doubles(p.probs());
        record.digest = fnv1a_doubles(q.probs(), record.digest);
        serialized = "{\"K\":" + std::to_string(k) + ",\"P\":" + format_doubles(p.probs()) +
                     ",\"Q\":" + format_doubles(q.probs()) + "}";
      });
  result.extras.emplace_back("max_formula_gap", *std::ranges::max_element(formula_gaps));
  return result;
}

TheoremCheckResult check_dpi_loose_bound(int trials, int k_min, int k_max, std::uint64_t seed) {
  return run_trials(
      "dpi_loose_bound", trials, kExactTol, /*equality=*/false, seed,
      [&](int, rng::Stream& stream, TrialRecord& record, std::string& serialized) {
        const int k = pick_k(stream, k_min, k_max);
        Categorical p = sample_simplex(stream, k);
        Categorical q = sample_simplex(stream, k);
        ClassTree tree = sample_random_tree(stream, k);
        auto sides = decomposition_sides(tree, p, q, /*weighted=*/false, DecompositionFault::None);
        record.lhs = sides.lhs;
        record.rhs = sides.rhs;
        record.digest = fnv1a_doubles(p.probs());
        record.digest = fnv1a_doubles(q.probs(), record.digest);
        serialized = "{\"K\":" + std::to_string(k) + ",\"P\":" + format_doubles(p.probs()) +
                     ",\"Q\":" + format_doubles(q.probs()) + ",\"tree\":\"" + serialize_tree(tree) +
                     "\"}";
      });
}

TheoremCheckResult check_conditional_decomposition(const LabeledDataset& data,
                                                   const ClassTree& tree,
                                                   const MulticlassScorer& scorer) {
  require(data.posteriors.has_value(), ErrorKind::MissingPosteriors,
          "conditional decomposition needs exact posteriors");
  require(tree.num_classes() == data.num_classes && scorer.num_classes() == data.num_classes,
          ErrorKind::AlignmentMismatch, "class counts disagree");
  const std::int64_t n = data.size();
  const int nodes = tree.num_nodes();

  Matrix q_rows = score_batch(scorer, data.features);
  std::vector<double> sample_kl(n);
  Matrix weighted_regret(n, nodes);  // w_ij * d(p_Sj|x_i || q_Sj|x_i)
  Matrix weight(n, nodes);           // w_ij = P(Y in S_j | x_i)

  parallel_for(n, [&](std::int64_t i) {
    auto p_row = data.posteriors->row(i);
    auto q_row = q_rows.row(i);
    double kl = 0.0;
    for (int c = 0; c < data.num_classes; ++c) {
      if (p_row[c] > 0.0) kl += p_row[c] * std::log(p_row[c] / q_row[c]);
    }
    sample_kl[i] = kl;
    std::vector<double> p_nodes(nodes), q_nodes(nodes);
    induce_node_probs_row(tree, p_row, p_nodes);
    induce_node_probs_row(tree, q_row, q_nodes);
    for (int j = 0; j < nodes; ++j) {
      double w = 0.0;
      for (int c : tree.node(j).subset) w += p_row[c];
      weight.at(i, j) = w;
      weighted_regret.at(i, j) = w > 0.0 ? w * binary_divergence(p_nodes[j], q_nodes[j]) : 0.0;
    }
  });

  double lhs = 0.0;
  for (double v : sample_kl) lhs += v;
  lhs /= static_cast<double>(n);

  // rhs follows the estimator shape: per node, the mean reach probability
  // times the reach-weighted mean of the per-sample binary regrets.
  double rhs = 0.0;
  for (int j = 0; j < nodes; ++j) {
    double mean_weight = 0.0, weighted_mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      mean_weight += weight.at(i, j);
      weighted_mean += weighted_regret.at(i, j);
    }
    mean_weight /= static_cast<double>(n);
    weighted_mean /= static_cast<double>(n);
    if (mean_weight > 0.0) rhs += mean_weight * (weighted_mean / mean_weight);
  }

  TheoremCheckResult result;
  result.name = "conditional_decomposition";
  result.trials = static_cast<int>(n);
  result.tolerance = 1e-9;
  result.equality = true;
  result.records.push_back({fnv1a_doubles({q_rows.data(), static_cast<std::size_t>(q_rows.size())}),
                            lhs, rhs});
  result.max_violation = std::abs(lhs - rhs);
  result.max_slack = rhs - lhs;
  result.pass = result.max_violation <= result.tolerance;
  if (!result.pass) {
    result.violation_inputs = "{\"lhs\":" + std::to_string(lhs) + ",\"rhs\":" + std::to_string(rhs) + "}";
  }
  return result;
}

TheoremCheckResult check_pinsker_zero_one(const LabeledDataset& data, const OvaScorer& ova) {
  require(data.posteriors.has_value(), ErrorKind::MissingPosteriors,
          "zero-one bound needs exact posteriors");
  require(ova.num_classes() == data.num_classes, ErrorKind::AlignmentMismatch,
          "class counts disagree");
  const std::int64_t n = data.size();
  const int k = data.num_classes;

  std::vector<double> excess(n);         // ova miss - bayes miss per sample
  Matrix binary_regret(n, k);            // d(p_i(x) || q_i(x)) per class
  parallel_for(n, [&](std::int64_t i) {
    auto x = data.features.row(i);
    auto p_row = data.posteriors->row(i);
    std::vector<double> scores(k);
    for (int c = 0; c < k; ++c) {
      scores[c] = ova.binaries()[c]->score(x);
      double q = std::clamp(scores[c], kEvalClamp, 1.0 - kEvalClamp);
      binary_regret.at(i, c) = binary_divergence(p_row[c], q);
    }
    int ova_pick = detail::argmax_row(scores);  // scale-invariant: argmax of raw scores
    int bayes_pick = detail::argmax_row(p_row);
    int label = data.labels[i];
    excess[i] = (ova_pick != label ? 1.0 : 0.0) - (bayes_pick != label ? 1.0 : 0.0);
  });

  double lhs = 0.0;
  for (double v : excess) lhs += v;
  lhs /= static_cast<double>(n);
  double regret_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += binary_regret.at(i, c);
    regret_sum += mean / static_cast<double>(n);
  }
  double rhs = std::sqrt(2.0 * regret_sum);
  double stat_tol = 3.0 / std::sqrt(static_cast<double>(n));

  TheoremCheckResult result;
  result.name = "pinsker_zero_one";
  result.trials = static_cast<int>(n);
  result.tolerance = stat_tol;
  result.equality = false;
  result.records.push_back({0, lhs, rhs});
  result.max_violation = lhs - rhs - stat_tol;
  result.max_slack = rhs - lhs;
  result.pass = result.max_violation <= 0.0;
  if (!result.pass) {
    result.violation_inputs = "{\"lhs\":" + std::to_string(lhs) + ",\"rhs\":" + std::to_string(rhs) + "}";
  }
  return result;
}

}  // namespace mcc
