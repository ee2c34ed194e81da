#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace meanfield {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: dimension mismatches, out-of-range parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

// A kernel/operation combination with no implementation (e.g. exact
// convolution of a bi-exponential component).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// A moment or integral that does not exist for the given parameters.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A particle position became non-finite during a step.
class NumericalDivergence : public Error {
 public:
  NumericalDivergence(long step, const std::string& what)
      : Error("non-finite particle state at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Problem size beyond what an exact solver accepts.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// A stability constant that cannot be computed for the configured model.
class ConstantsUnavailable : public Error {
 public:
  using Error::Error;
};

// Configuration validation failure; carries every violated constraint.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid configuration:";
    for (const auto& s : p) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace meanfield
