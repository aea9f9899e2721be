#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcc/error.hpp"

namespace mcc {

// Dense row-major matrix of doubles. Rows are handed out as spans; most of the
// library moves data around as (rows = samples, cols = features/classes).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int64_t rows, std::int64_t cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0) {
    require(rows >= 0 && cols >= 0, ErrorKind::InvalidArgument, "negative matrix shape");
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::span<double> row(std::int64_t i) {
    return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(std::int64_t i) const {
    return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)};
  }

  double& at(std::int64_t i, std::int64_t j) { return data_[i * cols_ + j]; }
  double at(std::int64_t i, std::int64_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::int64_t size() const { return rows_ * cols_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mcc
