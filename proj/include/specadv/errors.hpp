#pragma once

#include <stdexcept>
#include <string>

namespace specadv {

// Raised for malformed files, mismatched shapes and inconsistent datasets.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an iterative computation leaves the representable range,
// e.g. training loss turning non-finite.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace specadv
