#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tbgp {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise malformed input.
class InvalidInputError : public Error {
public:
  using Error::Error;
};

/// A stretch state with I3 <= 0, i.e. not reachable by det F > 0.
class InvalidStretchError : public Error {
public:
  using Error::Error;
};

/// Covariance factorization failed even after escalating jitter.
class IllConditionedError : public Error {
public:
  IllConditionedError(const std::string& what, std::vector<double> ladder)
      : Error(what), attempted_jitter(std::move(ladder)) {}
  /// Noise variances tried, in order, before giving up.
  std::vector<double> attempted_jitter;
};

/// Every hyperparameter restart ended in a non-finite state.
class OptimizationFailedError : public Error {
public:
  using Error::Error;
};

/// Malformed experiment configuration; message carries location info.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace tbgp
