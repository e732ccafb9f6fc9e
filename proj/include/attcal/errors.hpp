#pragma once

#include <stdexcept>
#include <string>

namespace attcal {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: malformed data, inconsistent dimensions, invalid config.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// An iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

// Perfect separation of the two treatment classes: the likelihood has no
// finite maximizer.
class SeparationError : public ConvergenceError {
 public:
  explicit SeparationError(const std::string& msg) : ConvergenceError(msg) {}
};

// A constrained problem has no feasible solution (e.g. balance weights when
// the groups do not overlap, or an interior maximizer escapes the boundary).
class InfeasibleError : public ConvergenceError {
 public:
  explicit InfeasibleError(const std::string& msg) : ConvergenceError(msg) {}
};

}  // namespace attcal
