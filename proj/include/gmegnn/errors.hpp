#pragma once

#include <stdexcept>
#include <string>

namespace gmegnn {

// Invalid arguments to a generator or configuration object.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when the training loss becomes non-finite.
struct DivergenceError : TrainingError {
  DivergenceError(const std::string& what, int epoch)
      : TrainingError(what), epoch(epoch) {}
  int epoch;
};

// Effect estimation cannot proceed (missing level, empty overlap, ...).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data (CSV schema violations etc).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gmegnn
