#pragma once

#include <stdexcept>
#include <string>

namespace embcurate {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk data does not match its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Arguments or in-memory data violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The requested constraints admit no solution (cluster-size bounds,
/// budgets, epsilon grids).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace embcurate
