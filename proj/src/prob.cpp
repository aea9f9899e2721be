#include "mcc/prob.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcc/parallel.hpp"

namespace mcc {

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
  require(probs_.size() >= 2, ErrorKind::InvalidArgument, "categorical needs at least 2 classes");
  double sum = 0.0;
  for (double v : probs_) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0 + kSumTolerance, ErrorKind::InvalidArgument,
            "categorical entry outside [0,1]");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kSumTolerance, ErrorKind::InvalidArgument,
          "categorical entries sum to " + std::to_string(sum));
  if (sum != 1.0) {
    for (double& v : probs_) v /= sum;
  }
  for (double& v : probs_) v = std::min(v, 1.0);
}

int Categorical::argmax() const { return detail::argmax_row(probs_); }

namespace detail {
int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}
}  // namespace detail

double cross_entropy(const Categorical& p, const Categorical& q) {
  require(p.size() == q.size(), ErrorKind::LengthMismatch, "cross_entropy length mismatch");
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    require(q[i] > 0.0, ErrorKind::SupportMismatch,
            "q has zero mass at class " + std::to_string(i) + " where p > 0");
    sum -= p[i] * std::log(q[i]);
  }
  return sum;
}

double kl_divergence(const Categorical& p, const Categorical& q) {
  require(p.size() == q.size(), ErrorKind::LengthMismatch, "kl_divergence length mismatch");
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    require(q[i] > 0.0, ErrorKind::SupportMismatch,
            "q has zero mass at class " + std::to_string(i) + " where p > 0");
    sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

double binary_divergence(double p, double q) {
  require(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0, ErrorKind::InvalidArgument,
          "binary_divergence arguments outside [0,1]");
  double sum = 0.0;
  if (p > 0.0) {
    require(q > 0.0, ErrorKind::SupportMismatch, "d(p||0) with p > 0");
    sum += p * std::log(p / q);
  }
  if (p < 1.0) {
    require(q < 1.0, ErrorKind::SupportMismatch, "d(p||1) with p < 1");
    sum += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  }
  return sum;
}

double binary_entropy(double p) {
  require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "binary_entropy argument outside [0,1]");
  double sum = 0.0;
  if (p > 0.0) sum -= p * std::log(p);
  if (p < 1.0) sum -= (1.0 - p) * std::log(1.0 - p);
  return sum;
}

LossReport empirical_report_rows(const Matrix& q_rows, const std::vector<int>& labels,
                                 const Matrix* posterior_rows) {
  const std::int64_t n = q_rows.rows();
  require(n == static_cast<std::int64_t>(labels.size()), ErrorKind::LengthMismatch,
          "sample count mismatch between assignments and labels");
  require(n > 0, ErrorKind::InvalidArgument, "empty evaluation set");
  if (posterior_rows != nullptr) {
    require(posterior_rows->rows() == n && posterior_rows->cols() == q_rows.cols(),
            ErrorKind::LengthMismatch, "posterior rows do not match assignments");
  }
  const int k = static_cast<int>(q_rows.cols());
  for (int label : labels) {
    require(label >= 0 && label < k, ErrorKind::LabelOutOfRange,
            "label " + std::to_string(label) + " outside 0.." + std::to_string(k - 1));
  }

  // Per-sample terms are filled in parallel and reduced in index order, so the
  // result does not depend on the worker count.
  std::vector<double> nll(n), base(posterior_rows ? n : 0);
  std::vector<char> miss(n);
  parallel_for(n, [&](std::int64_t i) {
    auto row = q_rows.row(i);
    nll[i] = -std::log(std::max(row[labels[i]], kEvalClamp));
    miss[i] = detail::argmax_row(row) != labels[i];
    if (posterior_rows != nullptr) {
      base[i] = -std::log(std::max(posterior_rows->row(i)[labels[i]], kEvalClamp));
    }
  });

  LossReport report;
  double nll_sum = 0.0, miss_sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    nll_sum += nll[i];
    miss_sum += miss[i];
  }
  report.log_loss = nll_sum / static_cast<double>(n);
  report.zero_one_error = miss_sum / static_cast<double>(n);
  if (posterior_rows != nullptr) {
    double base_sum = 0.0;
    for (double v : base) base_sum += v;
    report.regret = report.log_loss - base_sum / static_cast<double>(n);
  }
  return report;
}

LossReport empirical_report(const std::vector<Categorical>& q_assignments,
                            const std::vector<int>& labels,
                            const std::vector<Categorical>* true_posteriors) {
  require(!q_assignments.empty(), ErrorKind::InvalidArgument, "empty evaluation set");
  const int k = q_assignments.front().size();
  Matrix q_rows(static_cast<std::int64_t>(q_assignments.size()), k);
  for (std::size_t i = 0; i < q_assignments.size(); ++i) {
    require(q_assignments[i].size() == k, ErrorKind::LengthMismatch,
            "ragged assignment lengths");
    std::ranges::copy(q_assignments[i].probs(), q_rows.row(i).begin());
  }
  Matrix p_rows;
  if (true_posteriors != nullptr) {
    require(true_posteriors->size() == q_assignments.size(), ErrorKind::LengthMismatch,
            "posterior count mismatch");
    p_rows = Matrix(q_rows.rows(), k);
    for (std::size_t i = 0; i < true_posteriors->size(); ++i) {
      require((*true_posteriors)[i].size() == k, ErrorKind::LengthMismatch,
              "ragged posterior lengths");
      std::ranges::copy((*true_posteriors)[i].probs(), p_rows.row(i).begin());
    }
  }
  return empirical_report_rows(q_rows, labels, true_posteriors ? &p_rows : nullptr);
}

}  // namespace mcc
