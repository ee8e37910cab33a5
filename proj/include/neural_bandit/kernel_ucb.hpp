#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "neural_bandit/policy.hpp"

namespace neural_bandit {

using Eigen::Index;
using Eigen::MatrixXd;

struct KernelUcbConfig {
  double bandwidth = 1.0;      // sigma
  double lambda = 1.0;
  double beta = 1.0;           // exploration coefficient
  std::size_t max_contexts = 1000;
};

inline double rbf_kernel(const VectorXd& x, const VectorXd& y, double bandwidth) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

// Kernel ridge UCB with an RBF kernel:
//   mean = k^T (K + lambda I)^{-1} y,  width = beta sqrt(k(x, x) - k^T (K + lambda I)^{-1} k).
// (K + lambda I)^{-1} grows by a block update per stored context. After
// max_contexts observations the model is frozen.
class KernelUcb final : public Policy {
 public:
  explicit KernelUcb(const KernelUcbConfig& config) : config_(config) {
    if (!(config.bandwidth > 0.0)) throw ValidationError("KernelUCB bandwidth must be positive");
    if (!(config.lambda > 0.0)) throw ValidationError("KernelUCB lambda must be positive");
    if (!(config.beta >= 0.0)) throw ValidationError("KernelUCB beta must be nonnegative");
    if (config.max_contexts < 1) throw ValidationError("KernelUCB context cap must be at least 1");
  }

  std::string name() const override { return "kernel_ucb"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) {
      const VectorXd k = kernel_column(x);
      double mean = 0.0;
      double variance = 1.0;
      if (k.size() > 0) {
        mean = k.dot(alpha_);
        variance = 1.0 - k.dot(inverse_ * k);
      }
      s.scores.push_back(mean + config_.beta * std::sqrt(std::max(0.0, variance)));
    }
    s.action = argmax_first(s.scores);
    return s;
  }

  void update(const VectorXd& context, double reward) override {
    ++round_;
    if (stored_.size() >= config_.max_contexts) return;
    const VectorXd k = kernel_column(context);
    const double c = 1.0 + config_.lambda;
    const Index n = k.size();
    if (n == 0) {
      inverse_ = MatrixXd::Constant(1, 1, 1.0 / c);
    } else {
      const VectorXd mk = inverse_ * k;
      const double schur = c - k.dot(mk);
      MatrixXd next(n + 1, n + 1);
      next.topLeftCorner(n, n) = inverse_ + (mk / schur) * mk.transpose();
      next.topRightCorner(n, 1) = -mk / schur;
      next.bottomLeftCorner(1, n) = -mk.transpose() / schur;
      next(n, n) = 1.0 / schur;
      inverse_.swap(next);
    }
    stored_.push_back(context);
    targets_.push_back(reward);
    alpha_ = inverse_ * Eigen::Map<const VectorXd>(targets_.data(), static_cast<Index>(targets_.size()));
  }

  std::size_t round() const override { return round_; }
  std::size_t stored() const { return stored_.size(); }

 private:
  VectorXd kernel_column(const VectorXd& x) const {
    VectorXd k(static_cast<Index>(stored_.size()));
    for (std::size_t i = 0; i < stored_.size(); ++i) {
      k(static_cast<Index>(i)) = rbf_kernel(stored_[i], x, config_.bandwidth);
    }
    return k;
  }

  KernelUcbConfig config_;
  std::vector<VectorXd> stored_;
  std::vector<double> targets_;
  MatrixXd inverse_;
  VectorXd alpha_;
  std::size_t round_ = 0;
};

}  // namespace neural_bandit
