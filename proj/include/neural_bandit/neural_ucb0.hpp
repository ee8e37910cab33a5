#pragma once

// NeuralUCB_0 and neural epsilon-greedy_0: online ridge regression on the
// frozen feature map phi(x) = g(x; theta0) / sqrt(m).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neural_bandit/confidence.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/policy.hpp"

namespace neural_bandit {

using FeatureMap = std::function<VectorXd(const VectorXd&)>;

inline FeatureMap ntk_feature_map(NetworkParams theta0) {
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(theta0.shape().width));
  return [theta0 = std::move(theta0), inv_sqrt_m](const VectorXd& x) -> VectorXd {
    return gradient(theta0, x) * inv_sqrt_m;
  };
}

inline FeatureMap identity_feature_map() {
  return [](const VectorXd& x) -> VectorXd { return x; };
}

// Z_t = lambda I + sum phi phi^T, b_t = sum r phi, offset_t = theta_t - theta0 = Z_t^{-1} b_t.
class RidgeFeatureModel {
 public:
  RidgeFeatureModel(FeatureMap phi, Index dim, double lambda, DesignMode mode, std::size_t refresh)
      : phi_(std::move(phi)), design_(dim, lambda, mode, refresh), b_(VectorXd::Zero(dim)), offset_(VectorXd::Zero(dim)) {}

  VectorXd features(const VectorXd& x) const {
    VectorXd f = phi_(x);
    if (f.size() != design_.dim()) throw ValidationError("feature map returned the wrong dimension");
    return f;
  }

  void observe(const VectorXd& context, double reward) {
    if (!std::isfinite(reward)) throw ValidationError("reward must be finite");
    const VectorXd f = features(context);
    design_.rank_one_update(f);
    b_ += reward * f;
    offset_ = design_.solve(b_);
    ++rounds_;
  }

  const DesignMatrix& design() const { return design_; }
  const VectorXd& b() const { return b_; }
  const VectorXd& offset() const { return offset_; }
  std::size_t rounds() const { return rounds_; }

 private:
  FeatureMap phi_;
  DesignMatrix design_;
  VectorXd b_;
  VectorXd offset_;
  std::size_t rounds_ = 0;
};

struct NeuralUcb0Config {
  double lambda = 1.0;
  DesignMode design = DesignMode::full;
  std::size_t refresh = DesignMatrix::kDefaultRefresh;
  WidthSchedule width = LinearWidth{};
};

// U_a = <phi(x_a), theta_{t-1} - theta0> + gamma_{t-1} sqrt(phi^T Z_{t-1}^{-1} phi),
// the maximum of <phi(x_a), theta - theta0> over the confidence ellipsoid
// {theta : ||theta - theta_{t-1}||_Z <= gamma_{t-1}}.
class NeuralUcb0 final : public Policy {
 public:
  NeuralUcb0(const NeuralUcb0Config& config, FeatureMap phi, Index feature_dim)
      : model_(std::move(phi), feature_dim, config.lambda, config.design, config.refresh),
        width_(config.width, config.lambda) {
    gamma_ = width_(0, 0.0);
  }

  NeuralUcb0(const NeuralUcb0Config& config, const NetworkParams& theta0)
      : NeuralUcb0(config, ntk_feature_map(theta0), theta0.size()) {}

  std::string name() const override { return "neural_ucb0"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) {
      const VectorXd f = model_.features(x);
      s.scores.push_back(f.dot(model_.offset()) + gamma_ * std::sqrt(model_.design().quadratic_form(f)));
    }
    s.action = argmax_first(s.scores);
    return s;
  }

  void update(const VectorXd& context, double reward) override {
    model_.observe(context, reward);
    gamma_ = width_(model_.rounds(), model_.design().log_det_ratio());
  }

  std::size_t round() const override { return model_.rounds(); }

  double gamma() const { return gamma_; }
  const RidgeFeatureModel& model() const { return model_; }

 private:
  RidgeFeatureModel model_;
  WidthProvider width_;
  double gamma_ = 0.0;
};

struct NeuralGreedy0Config {
  double lambda = 1.0;
  DesignMode design = DesignMode::full;
  std::size_t refresh = DesignMatrix::kDefaultRefresh;
  double epsilon = 0.1;
};

class NeuralGreedy0 final : public Policy {
 public:
  NeuralGreedy0(const NeuralGreedy0Config& config, FeatureMap phi, Index feature_dim, Rng rng)
      : model_(std::move(phi), feature_dim, config.lambda, config.design, config.refresh),
        epsilon_(config.epsilon),
        rng_(std::move(rng)) {
    if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
  }

  NeuralGreedy0(const NeuralGreedy0Config& config, const NetworkParams& theta0, Rng rng)
      : NeuralGreedy0(config, ntk_feature_map(theta0), theta0.size(), std::move(rng)) {}

  std::string name() const override { return "neural_epsilon_greedy0"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) s.scores.push_back(model_.features(x).dot(model_.offset()));
    if (epsilon_ > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < epsilon_) {
      s.action = std::uniform_int_distribution<std::size_t>(0, contexts.size() - 1)(rng_);
    } else {
      s.action = argmax_first(s.scores);
    }
    return s;
  }

  void update(const VectorXd& context, double reward) override { model_.observe(context, reward); }

  std::size_t round() const override { return model_.rounds(); }

  const RidgeFeatureModel& model() const { return model_; }

 private:
  RidgeFeatureModel model_;
  double epsilon_;
  Rng rng_;
};

}  // namespace neural_bandit
