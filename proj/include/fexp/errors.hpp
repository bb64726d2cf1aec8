#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fexp {

/// Thrown when a caller violates an operation precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A coefficient leaves its admissible range (e.g. sigma <= 0 where the
/// Lamperti transform is taken).
class DomainViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite value or degenerate estimate met during a computation.
/// `index` locates the failure (time index, path index, ...) when known.
class NumericalFailure : public std::runtime_error {
 public:
  static constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

  explicit NumericalFailure(const std::string& what, std::size_t index = kNoIndex)
      : std::runtime_error(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace fexp
