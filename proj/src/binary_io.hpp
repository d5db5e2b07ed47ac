// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian u64 / f64 stream helpers shared by the binary file formats.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "attnlab/error.hpp"
#include "attnlab/numerics.hpp"

namespace attnlab::detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> buf{};
  for (std::size_t i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(buf.data(), buf.size());
}

inline std::uint64_t read_u64(std::istream& in) {
  std::array<char, 8> buf{};
  if (!in.read(buf.data(), buf.size())) throw FormatError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return v;
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

/// rows, cols, then row-major values.
inline void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, m.rows());
  write_u64(out, m.cols());
  for (double x : m.data()) write_f64(out, x);
}

inline Matrix read_matrix(std::istream& in, std::uint64_t expect_rows, std::uint64_t expect_cols) {
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows != expect_rows || cols != expect_cols) {
    throw FormatError("matrix shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " does not match expected " + std::to_string(expect_rows) + "x" +
                      std::to_string(expect_cols));
  }
  Matrix m(rows, cols);
  for (double& x : m.data()) x = read_f64(in);
  return m;
}

inline Matrix read_matrix(std::istream& in) {
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24)) {
    throw FormatError("implausible matrix shape in binary stream");
  }
  Matrix m(rows, cols);
  for (double& x : m.data()) x = read_f64(in);
  return m;
}

}  // namespace attnlab::detail
