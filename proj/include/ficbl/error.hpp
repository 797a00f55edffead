#pragma once

#include <stdexcept>
#include <string>

namespace ficbl {

/// Invalid argument or violated precondition.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// File missing, unreadable, or malformed on disk.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric procedure cannot proceed (too few points, degenerate data).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An expert rule has zero probability under the training data.
class RuleInconsistentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rule text does not match the grammar. `position` is a 0-based byte offset.
class RuleSyntaxError : public DomainError {
 public:
  RuleSyntaxError(const std::string& what, std::size_t position)
      : DomainError(what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace ficbl
