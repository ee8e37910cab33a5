#pragma once

#include <stdexcept>
#include <string>

namespace neural_bandit {

// Bad input: shapes, hyperparameter domains, malformed files. The CLI maps
// this to exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A matrix that must be invertible is not (min eigenvalue under threshold).
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Gradient descent produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step, double eta)
      : std::runtime_error(what), step_(step), eta_(eta) {}

  std::size_t step() const noexcept { return step_; }
  double eta() const noexcept { return eta_; }

 private:
  std::size_t step_;
  double eta_;
};

}  // namespace neural_bandit
