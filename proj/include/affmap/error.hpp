#pragma once

#include <stdexcept>
#include <string>

namespace affmap {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grid shapes that do not agree, or empty grids.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-domain numeric parameters (sigma <= 0, even kernel size, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Supervision payloads that cannot produce a heatmap (empty masks).
class SupervisionError : public Error {
 public:
  using Error::Error;
};

// Malformed files: bad magic, truncated payloads, invalid JSON records.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimization.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace affmap
