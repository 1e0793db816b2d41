#pragma once

#include <stdexcept>
#include <string>

namespace ivrobust {

/// Malformed or out-of-contract input (bad shapes, non-SPD matrices, bad flags).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure failed to reach its stated accuracy.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ivrobust
