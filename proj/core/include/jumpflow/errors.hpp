#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jumpflow {

/// Precondition violated by a caller-supplied argument.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A simulated state became non-finite.
class NumericalDivergence : public std::runtime_error {
 public:
  NumericalDivergence(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// One path of an ensemble diverged; the whole run is aborted.
class PathDiverged : public NumericalDivergence {
 public:
  PathDiverged(const std::string& what, double time, std::size_t path)
      : NumericalDivergence(what, time), path_(path) {}
  std::size_t path() const noexcept { return path_; }

 private:
  std::size_t path_;
};

/// Matrix too close to singular for the requested solve.
class IllConditioned : public std::runtime_error {
 public:
  IllConditioned(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// System assembly failed (incomplete topology, missing or duplicate channel).
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration file could not be turned into a valid experiment.
/// `path()` is the JSON field path that failed, e.g. "solver.h".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace jumpflow
