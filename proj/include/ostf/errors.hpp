#pragma once

#include <stdexcept>
#include <string>

namespace ostf {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid argument or out-of-range parameter.
class ParamError : public Error {
public:
  using Error::Error;
};

// Filesystem / stream failures.
class IoError : public Error {
public:
  using Error::Error;
};

// JPEG/PNG encode or decode failure.
class CodecError : public Error {
public:
  using Error::Error;
};

// Malformed or inconsistent configuration (bucket tables, registries).
class ConfigError : public Error {
public:
  using Error::Error;
};

// Incomplete evaluation matrix (missing train/test cells).
class AggregationError : public Error {
public:
  using Error::Error;
};

// Gradient check hit a nondifferentiable point; caller should re-sample.
class KinkError : public Error {
public:
  using Error::Error;
};

// Optimization diverged (NaN/inf loss); message carries the step index.
class TrainError : public Error {
public:
  using Error::Error;
};

}  // namespace ostf
