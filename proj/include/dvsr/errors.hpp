// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dvsr {

/// Base class for all dvsr errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad configuration: invalid parameter values, unknown keys, schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape or dimension contract violation (mismatched tensors, non-divisible sizes).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Container exists but its header or payload is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Container declares a dtype or axis order this build does not support.
class DtypeError : public Error {
 public:
  using Error::Error;
};

/// A latent was produced by a different autoencoder than the one consuming it.
class CodecError : public Error {
 public:
  using Error::Error;
};

/// Iterative process left its stability envelope (NaN loss, runaway residual).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvsr
