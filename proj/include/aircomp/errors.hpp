// Error taxonomy shared by all aircomp modules.
#pragma once

#include <stdexcept>
#include <string>

namespace aircomp {

/// Base class for all aircomp errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Mismatched or invalid matrix/vector dimensions.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Input violates a documented precondition (non-finite data, wrong sign, ...).
class ValidityError : public Error {
  public:
    using Error::Error;
};

/// Process parameter matrix has spectral radius >= 1.
class InstabilityError : public Error {
  public:
    using Error::Error;
};

/// An iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
  public:
    using Error::Error;
};

/// Bad configuration file or command line.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace aircomp
