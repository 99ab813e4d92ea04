// Copyright 2026 The reldist Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace reldist {

/// Invalid configuration value or inconsistent option set.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read, written, or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Domain violation in a numeric routine (bad index, non-finite input, guard exceeded).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training produced a non-finite gradient. Carries a dump of the offending batch.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}

  const std::string& dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

}  // namespace reldist
