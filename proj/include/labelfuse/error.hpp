#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace labelfuse {

/// Input violates a documented precondition (bad box, bad file, bad config).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed annotation text. `line()` is 1-based, 0 when not line oriented.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : ValidationError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vote ties are still pending and the pipeline cannot fuse yet.
class ReviewRequired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace labelfuse
