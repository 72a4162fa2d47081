#pragma once

#include <stdexcept>
#include <string>

namespace procgcn {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Schema declaration problems (missing columns, bad attribute specs).
struct SchemaError : Error {
  using Error::Error;
};

/// Malformed data: unparsable timestamps, negative durations, empty cases.
struct DataError : Error {
  using Error::Error;
};

/// Invalid run configuration or command usage.
struct ConfigError : Error {
  using Error::Error;
};

/// NaN/Inf encountered in a forward or backward pass.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace procgcn
