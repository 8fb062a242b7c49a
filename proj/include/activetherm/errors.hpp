#pragma once

#include <stdexcept>
#include <string>

namespace activetherm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition or inconsistent configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Failure of a numerical invariant at runtime (stability bound, singular
// innovation covariance, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File missing, unreadable, unwritable, or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace activetherm
