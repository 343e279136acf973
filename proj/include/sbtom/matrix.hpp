#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sbtom {

/// Dense row-major matrix of doubles. Desk-scale only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);

/// Row vector times matrix: out[j] = sum_i v[i] m(i, j).
std::vector<double> vec_mat(std::span<const double> v, const Matrix& m);

/// Largest |row sum - 1| over all rows.
double max_row_sum_deviation(const Matrix& m);

bool is_row_stochastic(const Matrix& m, double tol);

/// Largest absolute entrywise difference; matrices must share a shape.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace sbtom
