// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace attnlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its declared domain (non-finite value, bad range, empty input).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or config text.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace attnlab
