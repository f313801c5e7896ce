#pragma once

#include <stdexcept>
#include <string>

namespace rollcs {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array shapes that do not agree, or products that overflow.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Parameters outside their documented domain.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class DegenerateOperatorError : public Error {
 public:
  using Error::Error;
};

/// Raised by the solver when the objective stops being finite.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class NoDominantFrequencyError : public Error {
 public:
  using Error::Error;
};

class SnrUndefinedError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rollcs
