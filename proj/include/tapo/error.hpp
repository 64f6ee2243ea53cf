// Copyright 2026 The TAPO Authors
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

#ifndef TAPO_ERROR_HPP_
#define TAPO_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace tapo {

// Base class for recoverable failures caused by inputs (files, configs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A score lies outside its trait range or off the score grid.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

// Programming errors: a documented precondition was violated by the caller.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

}  // namespace tapo

#endif  // TAPO_ERROR_HPP_
