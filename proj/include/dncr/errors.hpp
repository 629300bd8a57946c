// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dncr {

// Bad user-supplied parameters (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Request exceeds a hard capability bound, e.g. oracle size limits
// (CLI exit code 3).
class BoundsError : public std::runtime_error {
public:
  explicit BoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered during training (CLI exit code 4).
class NumericError : public std::runtime_error {
public:
  NumericError(const std::string& msg, long step) : std::runtime_error(msg), step(step) {}
  long step;  // first offending step, -1 if unknown
};

// Structurally invalid data, e.g. a solution referencing nodes that do
// not exist. Distinct from mere infeasibility.
class MalformedError : public std::runtime_error {
public:
  explicit MalformedError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dncr
