#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stamping::linalg {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> column(std::size_t c) const;
  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const;
  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Each eigenvector
/// is signed so its largest-magnitude entry is positive.
SymmetricEigen symmetric_eigen(const Matrix& a);

}  // namespace stamping::linalg
