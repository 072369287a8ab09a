#pragma once

#include <stdexcept>
#include <string>

namespace penlmm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A coefficient with infinite penalty weight is nonzero.
class InfeasibleFrozenCoefficient : public Error {
 public:
  using Error::Error;
};

// The Armijo quantity Delta was not negative for a nonzero direction.
class NonDescentDirection : public Error {
 public:
  using Error::Error;
};

class NoPenalizedCoefficients : public Error {
 public:
  using Error::Error;
};

class EmptyCandidateSet : public Error {
 public:
  using Error::Error;
};

// Input file that cannot be parsed (bad number, ragged row, bad artifact).
class MalformedInput : public Error {
 public:
  using Error::Error;
};

// Inconsistent options or references to columns that do not exist.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace penlmm
