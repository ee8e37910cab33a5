#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "neural_bandit/policy.hpp"

namespace neural_bandit {

using Eigen::Index;
using Eigen::MatrixXd;

struct LinUcbConfig {
  double alpha = 1.0;
  double lambda = 1.0;
};

// Ridge UCB on the contexts themselves: U_a = x^T theta + alpha sqrt(x^T A^{-1} x)
// with A = lambda I + sum x x^T and theta = A^{-1} b. A is refactored by
// Cholesky after every update.
class LinUcb final : public Policy {
 public:
  LinUcb(const LinUcbConfig& config, Index dim)
      : alpha_(config.alpha),
        a_(config.lambda * MatrixXd::Identity(dim, dim)),
        b_(VectorXd::Zero(dim)),
        theta_(VectorXd::Zero(dim)),
        llt_(a_) {
    if (dim < 1) throw ValidationError("LinUCB dimension must be positive");
    if (!(config.lambda > 0.0)) throw ValidationError("LinUCB lambda must be positive");
    if (!(config.alpha >= 0.0)) throw ValidationError("LinUCB alpha must be nonnegative");
  }

  std::string name() const override { return "linucb"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) {
      check(x);
      const double variance = std::max(0.0, x.dot(llt_.solve(x)));
      s.scores.push_back(x.dot(theta_) + alpha_ * std::sqrt(variance));
    }
    s.action = argmax_first(s.scores);
    return s;
  }

  void update(const VectorXd& context, double reward) override {
    check(context);
    a_.noalias() += context * context.transpose();
    b_ += reward * context;
    llt_.compute(a_);
    theta_ = llt_.solve(b_);
    ++round_;
  }

  std::size_t round() const override { return round_; }
  const VectorXd& theta() const { return theta_; }

 private:
  void check(const VectorXd& x) const {
    if (x.size() != a_.rows()) throw ValidationError("LinUCB context has the wrong dimension");
  }

  double alpha_;
  MatrixXd a_;
  VectorXd b_;
  VectorXd theta_;
  Eigen::LLT<MatrixXd> llt_;
  std::size_t round_ = 0;
};

}  // namespace neural_bandit
