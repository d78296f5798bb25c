// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NVREADOUT_ERRORS_HPP
#define NVREADOUT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nvreadout {

/// Input violates a documented precondition (bad parameter, bad timeline, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solver or fit did not reach its stopping criterion.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or physically inconsistent input data (CSV rows, histograms).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear system that cannot be solved (singular error-model inversion).
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown key, unparsable value or unknown preset in a scenario config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nvreadout

#endif  // NVREADOUT_ERRORS_HPP
