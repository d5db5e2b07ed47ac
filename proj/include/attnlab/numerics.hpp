// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace attnlab {

/// Dense row-major matrix of doubles. Always at least 1x1.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::string shape() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;

  /// Rows [begin, end) and columns [col_begin, col_end) as a new matrix.
  Matrix block(std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
               std::size_t col_end) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Row vector times matrix: out[j] = sum_i v[i] * m(i, j).
std::vector<double> vec_mat(std::span<const double> v, const Matrix& m);

double trace(const Matrix& m);

/// Numerically stable softmax (max subtraction). Throws on empty or non-finite input.
std::vector<double> softmax_row(std::span<const double> v);
std::vector<double> log_softmax_row(std::span<const double> v);

double mean(std::span<const double> v);
std::vector<double> row_mean(const Matrix& m);

}  // namespace attnlab
