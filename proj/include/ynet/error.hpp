#pragma once

#include <stdexcept>
#include <string>

namespace ynet {

// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/rank mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyper-parameters or structural options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Spatial size incompatible with the network's downsampling factor.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// ROI/instance geometry violations.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Malformed values handed to an operation (e.g. non-normalized probabilities).
class InputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced during forward or backward.
class NumericError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

// Missing/corrupt files and data-set contract violations.
class DataError : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the object's current state (e.g. attaching a head twice).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace ynet
