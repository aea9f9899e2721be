#include "mcc/batch.hpp"

#include "mcc/parallel.hpp"

namespace mcc {

Matrix score_batch(const MulticlassScorer& scorer, const Matrix& features) {
  Matrix out(features.rows(), scorer.num_classes());
  parallel_for(features.rows(),
               [&](std::int64_t i) { scorer.score_row(features.row(i), out.row(i)); });
  return out;
}

Matrix score_batch_serial(const MulticlassScorer& scorer, const Matrix& features) {
  Matrix out(features.rows(), scorer.num_classes());
  for (std::int64_t i = 0; i < features.rows(); ++i) {
    scorer.score_row(features.row(i), out.row(i));
  }
  return out;
}

std::vector<double> binary_score_batch(const BinaryScorer& scorer, const Matrix& features,
                                       std::span<const int> rows) {
  const std::int64_t n = rows.empty() ? features.rows() : static_cast<std::int64_t>(rows.size());
  std::vector<double> out(n);
  parallel_for(n, [&](std::int64_t i) {
    out[i] = scorer.score(features.row(rows.empty() ? i : rows[i]));
  });
  return out;
}

std::vector<double> binary_score_batch_serial(const BinaryScorer& scorer, const Matrix& features,
                                              std::span<const int> rows) {
  const std::int64_t n = rows.empty() ? features.rows() : static_cast<std::int64_t>(rows.size());
  std::vector<double> out(n);
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = scorer.score(features.row(rows.empty() ? i : rows[i]));
  }
  return out;
}

}  // namespace mcc
