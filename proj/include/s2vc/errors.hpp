/*
 * Copyright (c) 2026 The S2VC Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace s2vc {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or feature shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by an operation, or an argument outside an op's domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

/// Malformed audio container. `offset` is the byte position where decoding failed.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Structured failure while loading one of the binary formats
/// (feature files, checkpoints, attention traces).
class LoadError : public Error {
 public:
  enum class Code {
    Io,
    BadMagic,
    VersionMismatch,
    UnsupportedDtype,
    LengthMismatch,
    DimensionMismatch,
    NonFinite,
    ChecksumMismatch,
    KindMismatch,
    Malformed,
  };

  LoadError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

const char* to_string(LoadError::Code code);

/// Source/target feature kind does not match what a model or pipeline expects.
class KindMismatchError : public Error {
 public:
  using Error::Error;
};

/// Configuration or usage problem (bad flag, missing manifest, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2vc
