#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mcc/error.hpp"
#include "mcc/matrix.hpp"

namespace mcc {

// A probability vector over K >= 2 classes. Construction validates entries
// and renormalizes sums that are within 1e-9 of one; anything further off is
// rejected rather than silently fixed.
class Categorical {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit Categorical(std::vector<double> probs);

  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](int i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  // Index of the largest entry; ties break toward the lowest class index.
  int argmax() const;

 private:
  std::vector<double> probs_;
};

struct LossReport {
  double log_loss = 0.0;                // nats
  std::optional<double> regret;         // nats, only with true posteriors
  double zero_one_error = 0.0;
};

// Sum of p_i * log(1/q_i) with the 0*log(0) = 0 convention. Raises
// SupportMismatch where q_i = 0 but p_i > 0.
double cross_entropy(const Categorical& p, const Categorical& q);

// D(p || q) >= 0, zero iff p = q on the support of p.
double kl_divergence(const Categorical& p, const Categorical& q);

// d(p || q) for Bernoulli parameters.
double binary_divergence(double p, double q);

// h(p), with h(0) = h(1) = 0.
double binary_entropy(double p);

// Evaluation clamp: probabilities at realized labels are floored at this
// value before taking logs, so reports stay finite on real data.
constexpr double kEvalClamp = 1e-12;

// Mean negative log assigned probability of the realized labels, zero-one
// error under argmax, and (when exact posteriors are supplied) the excess
// over the optimal log-loss.
LossReport empirical_report(const std::vector<Categorical>& q_assignments,
                            const std::vector<int>& labels,
                            const std::vector<Categorical>* true_posteriors = nullptr);

// Row-matrix core used by the batch paths: q_rows and posterior rows are
// N x K, each row a distribution.
LossReport empirical_report_rows(const Matrix& q_rows, const std::vector<int>& labels,
                                 const Matrix* posterior_rows = nullptr);

namespace detail {
// Argmax over a raw row with the lowest-index tie-break.
int argmax_row(std::span<const double> row);
}  // namespace detail

}  // namespace mcc
