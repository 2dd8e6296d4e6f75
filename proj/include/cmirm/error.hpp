// Copyright 2026 The cmirm Authors.
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

#ifndef CMIRM_ERROR_HPP_
#define CMIRM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cmirm {

// Base of every error raised by the library. Each subclass corresponds to one
// failure category so callers (the benchmark runner in particular) can decide
// whether a failure marks a single cell or aborts the run.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad magic or unsupported version in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally valid header but inconsistent or truncated payload.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Input records reference something that does not exist or repeat a key.
class DataError : public Error {
 public:
  using Error::Error;
};

// Statistic undefined for the given input (constant series, no disagreement
// possible, ...). Returned instead of NaN.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmirm

#endif  // CMIRM_ERROR_HPP_
