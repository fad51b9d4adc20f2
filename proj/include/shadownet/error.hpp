#pragma once

#include <stdexcept>
#include <string>

namespace shadownet {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or dimension mismatch; message names the offending dimension.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Invalid configuration values (ratios, bounds, seeds, graph structure).
class InvalidParams : public Error {
 public:
  explicit InvalidParams(const std::string& what) : Error(what) {}
};

// Secure-side memory budget exceeded.
class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what) : Error(what) {}
};

// File or container format problems.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace shadownet
