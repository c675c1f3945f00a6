#pragma once

#include <stdexcept>
#include <string>

namespace oefsmc {

// Base of every error the library raises. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or layer dimensions do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Not enough samples / rows / channels to satisfy a request.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A class index is out of [0, K).
class IndexError : public Error {
 public:
  using Error::Error;
};

// A denominator of the complementary distribution vanished.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace oefsmc
