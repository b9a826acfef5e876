#pragma once

#include <stdexcept>
#include <string>

namespace harmonize {

// Thrown for malformed configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown for malformed or insufficient input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A covariate cell matched no records; callers usually widen the window.
class NoDataError : public DataError {
 public:
  using DataError::DataError;
};

// An observed score has zero probability under the fitted measurement model,
// i.e. the empirical distribution lies outside the reachable marginals.
class DegenerateModelError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace harmonize
