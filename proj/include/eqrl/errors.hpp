#pragma once

#include <stdexcept>
#include <string>

namespace eqrl {

// Bad caller input (ratios out of range, gamma = 0, mismatched lengths, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// The host environment cannot run what was asked (missing interpreter, unreadable dir).
struct EnvironmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A malformed input file: corpus record, checkpoint, transcript.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An API was driven out of order (adding children away from the cursor, stale trace).
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IllegalAction : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct MutationExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ReplayMiss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace eqrl
