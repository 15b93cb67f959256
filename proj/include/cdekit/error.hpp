#pragma once

#include <stdexcept>
#include <string>

namespace cdekit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent inputs: mismatched reference measures, bad class specs.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Quadrature or root finding failed to reach the requested tolerance.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved_tolerance() const { return achieved_; }

 private:
  double achieved_;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A pool or search exceeded its configured size limit.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A documented precondition (e.g. eps > 1/sqrt(n)) does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Every candidate has likelihood zero.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdekit
