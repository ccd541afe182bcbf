#pragma once

#include <stdexcept>
#include <string>

namespace gazemoe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or incompatible config/data combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or record. The message names the offending field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (empty set, degenerate mask).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gazemoe
