// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace attnlab::detail {

/// out += a * m for `rows` input rows: a is rows x n (row stride a_stride), m is row-major
/// n x cols, out is rows x cols (row stride out_stride). Rows of m are taken four at a
/// time and applied to every input row before moving on, so a block of m is loaded once
/// per batch. Each output element sees the same operations in the same order whatever
/// the batch size. An AVX2 clone is picked at load time where available; it does not
/// contract into fused multiply-adds, so results do not depend on the CPU either.
[[gnu::target_clones("avx2", "default")]] inline void gemm_acc(
    const double* a, std::size_t rows, std::size_t a_stride, std::size_t n, const double* m,
    std::size_t cols, double* out, std::size_t out_stride) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* r0 = m + i * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    for (std::size_t b = 0; b < rows; ++b) {
      const double* x = a + b * a_stride;
      double* __restrict o = out + b * out_stride;
      const double x0 = x[i], x1 = x[i + 1], x2 = x[i + 2], x3 = x[i + 3];
      for (std::size_t j = 0; j < cols; ++j) {
        o[j] += (x0 * r0[j] + x1 * r1[j]) + (x2 * r2[j] + x3 * r3[j]);
      }
    }
  }
  for (; i < n; ++i) {
    const double* r = m + i * cols;
    for (std::size_t b = 0; b < rows; ++b) {
      const double xi = a[b * a_stride + i];
      double* __restrict o = out + b * out_stride;
      for (std::size_t j = 0; j < cols; ++j) o[j] += xi * r[j];
    }
  }
}

/// out[0, cols) += x[0, n) * m.
inline void axpy_rows(const double* x, std::size_t n, const double* m, std::size_t cols,
                      double* out) {
  gemm_acc(x, 1, n, n, m, cols, out, cols);
}

/// Dot product with four interleaved partial sums.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace attnlab::detail
