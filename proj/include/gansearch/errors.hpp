#pragma once

#include <stdexcept>
#include <string>

namespace gansearch {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches, degenerate batches.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration files, invalid option combinations. CLI exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or corrupted input data (dataset files, checkpoints,
// out-of-range tokens). CLI exit code 2.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values, PSD violations, undefined statistics. CLI exit code 3.
struct NumericError : Error {
  using Error::Error;
};

// Operations invoked against an object in the wrong state
// (stage mismatch, incomplete trace, resolution mismatch).
struct StateError : Error {
  using Error::Error;
};

// A trained component failed its calibration gate.
struct CalibrationError : Error {
  using Error::Error;
};

}  // namespace gansearch
