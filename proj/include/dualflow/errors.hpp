#pragma once

#include <stdexcept>
#include <string>

namespace dualflow {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform; message names the primitive and the shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Bad run configuration (unknown keys, invalid values, illegal combinations).
struct ConfigError : Error {
  using Error::Error;
};

// Dataset / file problems (parse failures, length mismatches, missing files).
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf escaped a computation, a solver gave up, a loss diverged.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace dualflow
