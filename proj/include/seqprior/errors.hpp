#pragma once

#include <stdexcept>

namespace seqprior {

/// Values outside the domain an operation accepts (e.g. actions outside [-1, 1]).
class InputDomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration: shapes, ranges, unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transient condition; the caller may retry later (e.g. replay not yet filled).
class RetryableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical failure (non-finite loss or gradient) during an update.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seqprior
