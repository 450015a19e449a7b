#pragma once

#include <stdexcept>
#include <string>

namespace relabund {

// Bad user-supplied data: malformed files, inconsistent labels, invalid
// configuration. Maps to CLI exit code 2.
class InputError : public std::runtime_error {
public:
  explicit InputError(const std::string& msg, long line = -1)
      : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

// Estimation failed on structurally valid input: non-convergence, singular
// working system, insufficient data. Maps to CLI exit code 1.
class EstimationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace relabund
