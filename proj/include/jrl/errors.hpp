#pragma once

#include <stdexcept>
#include <string>

namespace jrl {

// Raised when a caller violates a documented precondition (shapes, ranges,
// non-finite inputs, malformed sequences, tape misuse).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Raised for missing, unreadable, unwritable or corrupt files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when training produces a non-finite loss or gradient.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace jrl
