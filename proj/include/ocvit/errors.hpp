#pragma once

#include <stdexcept>
#include <string>

namespace ocvit {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension / batch assembly mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid hyperparameters or malformed configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Training-time failures: missing gradients, non-finite loss, bad labels.
struct TrainError : Error {
  using Error::Error;
};

// Split construction / metric computation failures.
struct EvalError : Error {
  using Error::Error;
};

// File ingestion and checkpoint serialization failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ocvit
