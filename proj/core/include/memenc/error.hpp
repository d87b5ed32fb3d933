#pragma once

#include <stdexcept>
#include <string>

namespace memenc {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: ConfigError/LookupError -> 2, NumericError -> 3, everything
// else -> 4.

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad configuration or user input.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing key (unknown subject, file, teacher run, ...).
struct LookupError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation called in a state that does not permit it.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN/Inf or divergence detected.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated precondition on values (e.g. sample coordinates out of range).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Filesystem trouble: missing blob, short read, write failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace memenc
