#pragma once

#include <stdexcept>
#include <string>

namespace compvid {

/// Bad argument to a public operation (shape, range, unknown enum value).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file does not follow the container or manifest layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A well-formed file whose contents break a data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf reached a loss or metric.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by models with a fixed entity count (No-Factor) when asked to run
/// on a scene with a different number of entities.
class IncompatibleEntityCount : public ArgumentError {
 public:
  IncompatibleEntityCount(long expected, long got)
      : ArgumentError("no_factor model is built for " + std::to_string(expected) +
                      " entities and cannot run on " + std::to_string(got) +
                      " (fully connected head has a fixed input size)"),
        expected_(expected),
        got_(got) {}
  long expected() const { return expected_; }
  long got() const { return got_; }

 private:
  long expected_;
  long got_;
};

}  // namespace compvid
