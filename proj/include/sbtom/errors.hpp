#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbtom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two objects that must live on the same state/action space do not.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A value violated a documented invariant (bad probabilities, bad config).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Internal consistency check failed; signals a construction bug upstream.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ImpossibleObservation : public Error {
 public:
  ImpossibleObservation(std::size_t action, std::size_t observation)
      : Error("impossible observation: o=" + std::to_string(observation) +
              " has zero likelihood after action a=" + std::to_string(action)),
        action_(action),
        observation_(observation) {}

  std::size_t action() const noexcept { return action_; }
  std::size_t observation() const noexcept { return observation_; }

 private:
  std::size_t action_;
  std::size_t observation_;
};

}  // namespace sbtom
