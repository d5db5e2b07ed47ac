// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "attnlab/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "attnlab/error.hpp"
#include "kernels.hpp"

namespace attnlab {

namespace {

void check_finite_nonempty(std::span<const double> v, const char* what) {
  if (v.empty()) throw DomainError(std::string(what) + ": empty input");
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("Matrix: zero dimension " + shape());
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ShapeError("Matrix: zero dimension " + shape());
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " + shape());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  if (rows_ == 0 || cols_ == 0) throw ShapeError("Matrix: zero dimension " + shape());
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix Matrix::block(std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                     std::size_t col_end) const {
  if (row_begin >= row_end || col_begin >= col_end || row_end > rows_ || col_end > cols_) {
    throw ShapeError("Matrix::block: range [" + std::to_string(row_begin) + "," +
                     std::to_string(row_end) + ")x[" + std::to_string(col_begin) + "," +
                     std::to_string(col_end) + ") outside " + shape());
  }
  Matrix out(row_end - row_begin, col_end - col_begin);
  for (std::size_t r = row_begin; r < row_end; ++r) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + col_begin),
                col_end - col_begin, out.row(r - row_begin).begin());
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  detail::gemm_acc(a.data().data(), a.rows(), a.cols(), a.cols(), b.data().data(), b.cols(),
                   out.data().data(), out.cols());
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: cannot multiply " + a.shape() + " by transpose of " +
                     b.shape());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = detail::dot(a.row(i).data(), b.row(j).data(), a.cols());
  }
  return out;
}

std::vector<double> vec_mat(std::span<const double> v, const Matrix& m) {
  if (v.size() != m.rows()) {
    throw ShapeError("vec_mat: cannot multiply 1x" + std::to_string(v.size()) + " by " + m.shape());
  }
  std::vector<double> out(m.cols(), 0.0);
  detail::axpy_rows(v.data(), v.size(), m.data().data(), m.cols(), out.data());
  return out;
}

double trace(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("trace: matrix " + m.shape() + " is not square");
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

std::vector<double> softmax_row(std::span<const double> v) {
  check_finite_nonempty(v, "softmax_row");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> log_softmax_row(std::span<const double> v) {
  check_finite_nonempty(v, "log_softmax_row");
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double log_norm = mx + std::log(sum);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::min(0.0, v[i] - log_norm);
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw DomainError("mean: empty input");
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

std::vector<double> row_mean(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = mean(m.row(r));
  return out;
}

}  // namespace attnlab
