#pragma once

#include <stdexcept>
#include <string>

namespace flowplace {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition (shape mismatch, bad index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or instance data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Synthetic generation hit a dead end.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf showed up in the model or a sampling trajectory.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The projection operator could not find a legal placement.
class LegalizationError : public Error {
 public:
  using Error::Error;
};

/// Malformed instance, placement or checkpoint file.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where + ": " + what) {}
};

}  // namespace flowplace
