#pragma once

#include <stdexcept>
#include <string>

namespace knobtuner {

// Bad input data: unparseable files, schema violations, out-of-range settings.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A configuration evaluation failed (adapter process error, timeout,
// unparseable benchmark output). The simulator never throws this on
// valid input.
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or gradient during a network update.
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failures distinct from malformed content.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace knobtuner
