#pragma once

#include <stdexcept>
#include <string>

namespace ctxbnn {

/// Bad arguments or configuration supplied by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that violates a domain precondition (e.g. a behaviour outside the
/// non-disturbing polytope handed to the labeler).
class InvalidInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training or sampling produced non-finite values.
class NumericDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public IoError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : IoError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ctxbnn
