#pragma once

#include <stdexcept>
#include <string>

namespace toaopt {

/// Invalid or inconsistent configuration (scenario file, CLI flags, parameters).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a model function (e.g. non-positive distance).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Numerical failure inside the covariance recursion or the calibration search.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace toaopt
