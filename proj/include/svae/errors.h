// Copyright (c) 2026 The svae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SVAE_ERRORS_H_
#define SVAE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace svae {

// Base of every error raised by the library. The CLI maps ValidationError
// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Sequence too short for an operation (pooling, shuffle, cropping).
class LengthError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or configuration value.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed file: bad magic, version, or truncation.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Checkpoint or file written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Violated calling contract (non-scalar loss, non-deterministic function).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Estimator called with too few samples.
class SampleSizeError : public Error {
 public:
  using Error::Error;
};

// Evaluation protocol cannot be run on the given data.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace svae

#endif  // SVAE_ERRORS_H_
