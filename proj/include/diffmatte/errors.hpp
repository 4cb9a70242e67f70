#pragma once

#include <stdexcept>
#include <string>

namespace diffmatte {

/// Invalid argument or violated precondition (bad shape, out-of-range time, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Filesystem failure: unreadable or unwritable path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (image headers, payloads, config text).
class ParseError : public std::runtime_error {
 public:
  enum class Kind { BadHeader, BadMaxval, Truncated, BadSyntax, UnknownKey };

  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Non-finite values produced during optimisation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffmatte
