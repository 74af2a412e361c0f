// Copyright 2026 The PDPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PDPA_ERRORS_H_
#define PDPA_ERRORS_H_

#include <stdexcept>
#include <string>

namespace pdpa {

// Violated precondition or invalid configuration. The CLI maps it to exit 1.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// A forward operation produced NaN or Inf.
class NumericError : public ContractError {
 public:
  explicit NumericError(const std::string& what) : ContractError(what) {}
};

// Unreadable or unwritable file. The CLI maps it to exit 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file contents (bad magic, truncated container, bad JSONL line).
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

}  // namespace pdpa

#endif  // PDPA_ERRORS_H_
