#pragma once

#include <stdexcept>
#include <string>

namespace pdnet {

// Tensor extents do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Bad input data, unreadable or corrupt files, broken preprocessing contract.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: unknown keys, malformed values, violated config invariants.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Autodiff misuse (consumed tape, non-scalar loss) and numeric failures.
class AutodiffError : public std::logic_error {
 public:
  explicit AutodiffError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace pdnet
