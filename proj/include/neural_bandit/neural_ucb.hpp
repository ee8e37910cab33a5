#pragma once

// NeuralUCB and neural epsilon-greedy. Both keep a trained network; NeuralUCB
// adds the gradient-feature design matrix and a confidence width.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neural_bandit/confidence.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/policy.hpp"
#include "neural_bandit/training.hpp"

namespace neural_bandit {

struct TrainingSchedule {
  double lambda = 1.0;
  double eta = 1e-2;
  // Gradient steps per retrain. Empty: J = t at round t.
  std::optional<std::size_t> steps;
  // Empty: full-gradient descent.
  std::optional<std::size_t> batch = 50;
  std::size_t cadence = 50;
  std::size_t start_round = 0;
  // Start each retrain from theta_{t-1} instead of theta0.
  bool warm_start = false;

  void validate() const {
    if (!(lambda > 0.0)) throw ValidationError("training lambda must be positive");
    if (!(eta > 0.0)) throw ValidationError("training eta must be positive");
    if (batch && *batch == 0) throw ValidationError("training batch must be positive");
    if (cadence == 0) throw ValidationError("training cadence must be positive");
  }
};

// The network, its initialization and the observation history.
class NeuralRegressor {
 public:
  NeuralRegressor(NetworkParams theta0, TrainingSchedule schedule)
      : theta0_(std::move(theta0)), theta_(theta0_), schedule_(schedule) {
    schedule_.validate();
  }

  const NetworkParams& theta0() const { return theta0_; }
  const NetworkParams& theta() const { return theta_; }
  const TrainingSchedule& schedule() const { return schedule_; }
  std::size_t size() const { return rewards_.size(); }
  const std::vector<VectorXd>& contexts() const { return contexts_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<double>& last_loss() const { return last_loss_; }

  // Record (x, r) and retrain when the schedule says so.
  void observe(const VectorXd& context, double reward, Rng& rng) {
    if (!std::isfinite(reward)) throw ValidationError("reward must be finite");
    contexts_.push_back(context);
    rewards_.push_back(reward);
    const std::size_t t = rewards_.size();
    if (t % schedule_.cadence == 0 && t >= schedule_.start_round) retrain(rng);
  }

  void retrain(Rng& rng) {
    const auto t = static_cast<Index>(rewards_.size());
    if (t == 0) return;
    MatrixXd xs(theta0_.shape().input_dim, t);
    for (Index i = 0; i < t; ++i) xs.col(i) = contexts_[static_cast<std::size_t>(i)];
    const VectorXd rs = Eigen::Map<const VectorXd>(rewards_.data(), t);
    TrainConfig config{schedule_.lambda, schedule_.eta, schedule_.steps.value_or(static_cast<std::size_t>(t)),
                       schedule_.batch};
    const NetworkParams* start = schedule_.warm_start ? &theta_ : nullptr;
    auto result = train_nn(config, xs, rs, theta0_, &rng, start);
    theta_ = std::move(result.params);
    last_loss_ = std::move(result.loss);
  }

 private:
  NetworkParams theta0_;
  NetworkParams theta_;
  TrainingSchedule schedule_;
  std::vector<VectorXd> contexts_;
  std::vector<double> rewards_;
  std::vector<double> last_loss_;
};

struct NeuralUcbConfig {
  NetworkShape shape;
  TrainingSchedule training;
  DesignMode design = DesignMode::full;
  std::size_t refresh = DesignMatrix::kDefaultRefresh;
  WidthSchedule width = ConstantWidth{1.0};
};

// U_a = f(x_a; theta_{t-1}) + gamma_{t-1} sqrt(g^T Z_{t-1}^{-1} g / m), with
// Z updated by the gradient at theta_{t-1} of the played context.
class NeuralUcb final : public Policy {
 public:
  NeuralUcb(const NeuralUcbConfig& config, NetworkParams theta0, Rng rng)
      : net_(std::move(theta0), config.training),
        design_(net_.theta0().size(), config.training.lambda, config.design, config.refresh),
        width_(config.width, config.training.lambda),
        rng_(std::move(rng)),
        inv_sqrt_m_(1.0 / std::sqrt(static_cast<double>(net_.theta0().shape().width))) {
    gamma_ = width_(0, 0.0);
  }

  std::string name() const override { return "neural_ucb"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) {
      const auto vg = evaluate(net_.theta(), x);
      const double bonus = gamma_ == 0.0 ? 0.0 : gamma_ * std::sqrt(design_.quadratic_form(vg.gradient * inv_sqrt_m_));
      s.scores.push_back(vg.value + bonus);
    }
    s.action = argmax_first(s.scores);
    return s;
  }

  void update(const VectorXd& context, double reward) override {
    design_.rank_one_update(gradient(net_.theta(), context) * inv_sqrt_m_);
    net_.observe(context, reward, rng_);
    gamma_ = width_(net_.size(), design_.log_det_ratio());
  }

  std::size_t round() const override { return net_.size(); }

  double gamma() const { return gamma_; }
  const DesignMatrix& design() const { return design_; }
  const NeuralRegressor& network() const { return net_; }

 private:
  NeuralRegressor net_;
  DesignMatrix design_;
  WidthProvider width_;
  Rng rng_;
  double inv_sqrt_m_;
  double gamma_ = 0.0;
};

struct NeuralGreedyConfig {
  NetworkShape shape;
  TrainingSchedule training;
  double epsilon = 0.1;
};

inline void validate_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
}

// With probability epsilon a uniform action; otherwise argmax_a f(x_a; theta).
// Exploration and minibatch sampling share one stream; no draw is made when
// epsilon is 0.
class NeuralGreedy final : public Policy {
 public:
  NeuralGreedy(const NeuralGreedyConfig& config, NetworkParams theta0, Rng rng)
      : net_(std::move(theta0), config.training), epsilon_(config.epsilon), rng_(std::move(rng)) {
    validate_epsilon(epsilon_);
  }

  std::string name() const override { return "neural_epsilon_greedy"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    Selection s;
    s.scores.reserve(contexts.size());
    for (const auto& x : contexts) s.scores.push_back(forward(net_.theta(), x));
    if (epsilon_ > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < epsilon_) {
      s.action = std::uniform_int_distribution<std::size_t>(0, contexts.size() - 1)(rng_);
    } else {
      s.action = argmax_first(s.scores);
    }
    return s;
  }

  void update(const VectorXd& context, double reward) override { net_.observe(context, reward, rng_); }

  std::size_t round() const override { return net_.size(); }

  const NeuralRegressor& network() const { return net_; }

 private:
  NeuralRegressor net_;
  double epsilon_;
  Rng rng_;
};

}  // namespace neural_bandit
