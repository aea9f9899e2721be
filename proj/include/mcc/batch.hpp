#pragma once

#include "mcc/matrix.hpp"
#include "mcc/scorer.hpp"

namespace mcc {

// Batch evaluation kernels. The parallel versions write disjoint output rows
// under a static schedule, so they are exact matches for their serial
// references at any worker count; the *_serial twins stay around as the
// reference implementations for tests and the benchmark tool.

// One probability row per sample.
Matrix score_batch(const MulticlassScorer& scorer, const Matrix& features);
Matrix score_batch_serial(const MulticlassScorer& scorer, const Matrix& features);

// One Bernoulli value per sample; `rows` selects a subset of feature rows
// (empty = all rows).
std::vector<double> binary_score_batch(const BinaryScorer& scorer, const Matrix& features,
                                       std::span<const int> rows = {});
std::vector<double> binary_score_batch_serial(const BinaryScorer& scorer, const Matrix& features,
                                              std::span<const int> rows = {});

}  // namespace mcc
