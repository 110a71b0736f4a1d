// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lcnerf {

/// Bad shapes, ranges or arguments handed to a public operation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unknown key or malformed value in a configuration file or override.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::runtime_error(message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Missing or unreadable file; the message always carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corrupt, truncated or version-mismatched binary container.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss term evaluated to NaN/Inf. `term()` names the offending term.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& term)
      : std::runtime_error("non-finite value in loss term '" + term + "'"),
        term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

}  // namespace lcnerf
