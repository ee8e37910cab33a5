#pragma once

// Gradient descent on
//
//   L(theta) = sum_i (f(x_i; theta) - r_i)^2 / 2 + m lambda ||theta - theta0||^2 / 2
//
// starting from theta0 (or a warm start) and regularized toward theta0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "neural_bandit/errors.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

struct TrainConfig {
  double lambda = 1.0;
  double eta = 1e-3;
  std::size_t steps = 0;  // J
  // Empty: full-gradient descent on L. Otherwise minibatch SGD with this
  // batch size on L / t, sampling without replacement within each epoch.
  std::optional<std::size_t> batch;

  void validate() const {
    if (!(lambda > 0.0)) throw ValidationError("train: lambda must be positive");
    if (!(eta > 0.0)) throw ValidationError("train: eta must be positive");
    if (batch && *batch == 0) throw ValidationError("train: batch size must be positive");
  }
};

struct TrainResult {
  NetworkParams params;
  // Full mode: L(theta^(j)) for j = 0..J. Minibatch mode: the sampled batch
  // objective at each step.
  std::vector<double> loss;
};

// Full objective L(theta) on all data.
inline double training_loss(const NetworkParams& params, const NetworkParams& anchor,
                            const Eigen::Ref<const MatrixXd>& contexts, const Eigen::Ref<const VectorXd>& rewards,
                            double lambda) {
  const double m = static_cast<double>(params.shape().width);
  const VectorXd residual = forward_batch(params, contexts) - rewards;
  return 0.5 * residual.squaredNorm() + 0.5 * m * lambda * (params.flat() - anchor.flat()).squaredNorm();
}

inline VectorXd training_gradient(const NetworkParams& params, const NetworkParams& anchor,
                                  const Eigen::Ref<const MatrixXd>& contexts,
                                  const Eigen::Ref<const VectorXd>& rewards, double lambda) {
  const double m = static_cast<double>(params.shape().width);
  const VectorXd residual = forward_batch(params, contexts) - rewards;
  return weighted_gradient(params, contexts, residual) + m * lambda * (params.flat() - anchor.flat());
}

// `contexts` holds one column per observation. `anchor` is theta0; `start`
// defaults to it. `rng` is only used in minibatch mode.
inline TrainResult train_nn(const TrainConfig& config, const Eigen::Ref<const MatrixXd>& contexts,
                            const Eigen::Ref<const VectorXd>& rewards, const NetworkParams& anchor,
                            Rng* rng = nullptr, const NetworkParams* start = nullptr) {
  config.validate();
  if (contexts.cols() != rewards.size()) throw ValidationError("train: context and reward counts differ");
  if (start && start->shape() != anchor.shape()) throw ValidationError("train: warm start has a different shape");

  TrainResult result{start ? *start : anchor, {}};
  if (config.steps == 0) return result;
  if (contexts.cols() == 0) throw ValidationError("train: no data");
  if (!rewards.allFinite()) throw ValidationError("train: rewards must be finite");

  NetworkParams& theta = result.params;
  const double m = static_cast<double>(anchor.shape().width);
  const Index n = contexts.cols();

  auto diverged = [&](std::size_t step) {
    return DivergenceError("training diverged at step " + std::to_string(step) + " with eta " +
                               std::to_string(config.eta),
                           step, config.eta);
  };

  if (!config.batch) {
    result.loss.reserve(config.steps + 1);
    for (std::size_t j = 0; j < config.steps; ++j) {
      const VectorXd residual = forward_batch(theta, contexts) - rewards;
      const VectorXd offset = theta.flat() - anchor.flat();
      const double loss = 0.5 * residual.squaredNorm() + 0.5 * m * config.lambda * offset.squaredNorm();
      if (!std::isfinite(loss)) throw diverged(j);
      result.loss.push_back(loss);
      theta.flat() -= config.eta * (weighted_gradient(theta, contexts, residual) + m * config.lambda * offset);
    }
    const double final_loss = training_loss(theta, anchor, contexts, rewards, config.lambda);
    if (!std::isfinite(final_loss)) throw diverged(config.steps);
    result.loss.push_back(final_loss);
    return result;
  }

  if (!rng) throw ValidationError("train: minibatch mode needs a random stream");
  const std::size_t batch = std::min<std::size_t>(*config.batch, static_cast<std::size_t>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::size_t cursor = order.size();
  MatrixXd xb(contexts.rows(), static_cast<Index>(batch));
  VectorXd rb(static_cast<Index>(batch));
  const double reg = m * config.lambda / static_cast<double>(n);

  result.loss.reserve(config.steps);
  for (std::size_t j = 0; j < config.steps; ++j) {
    for (std::size_t k = 0; k < batch; ++k) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), *rng);
        cursor = 0;
      }
      const Index idx = order[cursor++];
      xb.col(static_cast<Index>(k)) = contexts.col(idx);
      rb(static_cast<Index>(k)) = rewards(idx);
    }
    const VectorXd residual = forward_batch(theta, xb) - rb;
    const VectorXd offset = theta.flat() - anchor.flat();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const double loss = 0.5 * inv_b * residual.squaredNorm() + 0.5 * reg * offset.squaredNorm();
    if (!std::isfinite(loss)) throw diverged(j);
    result.loss.push_back(loss);
    theta.flat() -= config.eta * (weighted_gradient(theta, xb, inv_b * residual) + reg * offset);
  }
  if (!theta.flat().allFinite()) throw diverged(config.steps);
  return result;
}

struct MonotoneTrainResult {
  TrainResult result;
  double eta = 0.0;
  int halvings = 0;
};

// Full-gradient training that halves eta until the loss trajectory is
// nonincreasing (and finite), at most `max_halvings` times.
inline MonotoneTrainResult train_nn_monotone(TrainConfig config, const Eigen::Ref<const MatrixXd>& contexts,
                                             const Eigen::Ref<const VectorXd>& rewards,
                                             const NetworkParams& anchor, int max_halvings = 10) {
  config.batch.reset();
  for (int halvings = 0; halvings <= max_halvings; ++halvings) {
    try {
      auto result = train_nn(config, contexts, rewards, anchor);
      const bool monotone =
          std::adjacent_find(result.loss.begin(), result.loss.end(), [](double a, double b) { return b > a; }) ==
          result.loss.end();
      if (monotone) return {std::move(result), config.eta, halvings};
    } catch (const DivergenceError&) {
    }
    config.eta *= 0.5;
  }
  throw DivergenceError("training loss not monotone after " + std::to_string(max_halvings) + " step halvings",
                        config.steps, config.eta);
}

}  // namespace neural_bandit
