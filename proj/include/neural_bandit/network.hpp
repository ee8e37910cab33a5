#pragma once

// Fully connected ReLU network without biases:
//
//   f(x; theta) = sqrt(m) * W_L relu(W_{L-1} relu(... relu(W_1 x)))
//
// with W_1 in R^{m x d}, W_2..W_{L-1} in R^{m x m} and W_L stored as a 1 x m
// row. Parameters live in one flat vector: vec(W_1), vec(W_2), ..., vec(W_L),
// each block column-major.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "neural_bandit/errors.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NetworkShape {
  Index input_dim = 0;
  Index width = 0;
  Index depth = 2;

  // p = m d + m^2 (L - 2) + m
  Index parameter_count() const { return width * input_dim + width * width * (depth - 2) + width; }

  Index rows(Index layer) const { return layer + 1 == depth ? 1 : width; }
  Index cols(Index layer) const { return layer == 0 ? input_dim : width; }

  Index offset(Index layer) const {
    if (layer == 0) return 0;
    return width * input_dim + width * width * (layer - 1);
  }

  void validate() const {
    if (input_dim < 1) throw ValidationError("network input_dim must be positive");
    if (width < 1) throw ValidationError("network width must be positive");
    if (depth < 2) throw ValidationError("network depth must be at least 2");
  }

  // The symmetric initialization duplicates half-blocks, so d and m must be even.
  void validate_symmetric() const {
    validate();
    if (input_dim % 2 != 0 || width % 2 != 0) {
      throw ValidationError("symmetric initialization needs even input_dim and width, got d=" +
                            std::to_string(input_dim) + " m=" + std::to_string(width));
    }
  }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

class NetworkParams {
 public:
  NetworkParams() = default;

  explicit NetworkParams(const NetworkShape& shape)
      : shape_(shape), theta_(VectorXd::Zero(shape.parameter_count())) {
    shape_.validate();
  }

  static NetworkParams unflatten(const NetworkShape& shape, const VectorXd& theta) {
    shape.validate();
    if (theta.size() != shape.parameter_count()) {
      throw ValidationError("parameter vector has length " + std::to_string(theta.size()) +
                            ", expected " + std::to_string(shape.parameter_count()));
    }
    NetworkParams params;
    params.shape_ = shape;
    params.theta_ = theta;
    return params;
  }

  const NetworkShape& shape() const { return shape_; }
  Index size() const { return theta_.size(); }

  const VectorXd& flat() const { return theta_; }
  VectorXd& flat() { return theta_; }
  VectorXd flatten() const { return theta_; }

  Eigen::Map<const MatrixXd> layer(Index l) const {
    return {theta_.data() + shape_.offset(l), shape_.rows(l), shape_.cols(l)};
  }
  Eigen::Map<MatrixXd> layer(Index l) {
    return {theta_.data() + shape_.offset(l), shape_.rows(l), shape_.cols(l)};
  }

  std::vector<MatrixXd> weights() const {
    std::vector<MatrixXd> out;
    out.reserve(static_cast<std::size_t>(shape_.depth));
    for (Index l = 0; l < shape_.depth; ++l) out.emplace_back(layer(l));
    return out;
  }

 private:
  NetworkShape shape_;
  VectorXd theta_;
};

// W_l = [[W, 0], [0, W]] with W ~ N(0, 4/m) for l < L, W_L = (w^T, -w^T) with
// w ~ N(0, 2/m). Gives f(x) = 0 whenever x's two halves are equal.
inline NetworkParams init_symmetric(const NetworkShape& shape, Rng& rng) {
  shape.validate_symmetric();
  NetworkParams params(shape);
  const double m = static_cast<double>(shape.width);
  std::normal_distribution<double> hidden(0.0, std::sqrt(4.0 / m));
  std::normal_distribution<double> output(0.0, std::sqrt(2.0 / m));
  for (Index l = 0; l + 1 < shape.depth; ++l) {
    auto w = params.layer(l);
    const Index r = w.rows() / 2;
    const Index c = w.cols() / 2;
    for (Index j = 0; j < c; ++j) {
      for (Index i = 0; i < r; ++i) {
        const double v = hidden(rng);
        w(i, j) = v;
        w(i + r, j + c) = v;
      }
    }
  }
  auto last = params.layer(shape.depth - 1);
  const Index half = shape.width / 2;
  for (Index j = 0; j < half; ++j) {
    const double v = output(rng);
    last(0, j) = v;
    last(0, j + half) = -v;
  }
  return params;
}

// Every entry i.i.d.: N(0, 2/m) for l < L and N(0, 1/m) for W_L.
inline NetworkParams init_plain(const NetworkShape& shape, Rng& rng) {
  shape.validate();
  NetworkParams params(shape);
  const double m = static_cast<double>(shape.width);
  std::normal_distribution<double> hidden(0.0, std::sqrt(2.0 / m));
  std::normal_distribution<double> output(0.0, std::sqrt(1.0 / m));
  for (Index l = 0; l < shape.depth; ++l) {
    auto w = params.layer(l);
    auto& dist = (l + 1 == shape.depth) ? output : hidden;
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  return params;
}

namespace detail {

inline void check_input(const NetworkParams& params, Index rows) {
  if (rows != params.shape().input_dim) {
    throw ValidationError("context has dimension " + std::to_string(rows) + ", network expects " +
                          std::to_string(params.shape().input_dim));
  }
}

// Hidden activations for each layer on a batch of column contexts.
// pre[l] = W_l act[l], act[l + 1] = relu(pre[l]), act[0] = X.
struct Activations {
  std::vector<MatrixXd> pre;
  std::vector<MatrixXd> act;
};

inline Activations propagate(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& xs) {
  const Index hidden_layers = params.shape().depth - 1;
  Activations a;
  a.pre.reserve(static_cast<std::size_t>(hidden_layers));
  a.act.reserve(static_cast<std::size_t>(hidden_layers + 1));
  a.act.emplace_back(xs);
  for (Index l = 0; l < hidden_layers; ++l) {
    a.pre.emplace_back(params.layer(l) * a.act.back());
    a.act.emplace_back(a.pre.back().cwiseMax(0.0));
  }
  return a;
}

}  // namespace detail

// f(x) on each column of xs.
inline VectorXd forward_batch(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& xs) {
  detail::check_input(params, xs.rows());
  const auto a = detail::propagate(params, xs);
  const double scale = std::sqrt(static_cast<double>(params.shape().width));
  return (scale * (params.layer(params.shape().depth - 1) * a.act.back())).transpose();
}

inline double forward(const NetworkParams& params, const Eigen::Ref<const VectorXd>& x) {
  return forward_batch(params, x)(0);
}

// sum_i weights_i * grad_theta f(x_i; theta), flattened like NetworkParams.
// ReLU derivative at exactly zero is taken as zero.
inline VectorXd weighted_gradient(const NetworkParams& params, const Eigen::Ref<const MatrixXd>& xs,
                                  const Eigen::Ref<const VectorXd>& weights) {
  detail::check_input(params, xs.rows());
  if (weights.size() != xs.cols()) throw ValidationError("weight count must match context count");
  const NetworkShape& shape = params.shape();
  const Index last = shape.depth - 1;
  const double scale = std::sqrt(static_cast<double>(shape.width));
  const auto a = detail::propagate(params, xs);

  NetworkParams grad(shape);
  grad.layer(last) = scale * (a.act.back() * weights).transpose();

  // delta holds d(sum_i w_i f_i)/d(pre_l) column by column.
  MatrixXd delta = scale * params.layer(last).transpose() * weights.transpose();
  for (Index l = last - 1; l >= 0; --l) {
    delta = delta.cwiseProduct((a.pre[static_cast<std::size_t>(l)].array() > 0.0).cast<double>().matrix());
    grad.layer(l) = delta * a.act[static_cast<std::size_t>(l)].transpose();
    if (l > 0) delta = params.layer(l).transpose() * delta;
  }
  return std::move(grad.flat());
}

inline VectorXd gradient(const NetworkParams& params, const Eigen::Ref<const VectorXd>& x) {
  return weighted_gradient(params, x, VectorXd::Ones(1));
}

struct ValueAndGradient {
  double value;
  VectorXd gradient;
};

inline ValueAndGradient evaluate(const NetworkParams& params, const Eigen::Ref<const VectorXd>& x) {
  return {forward(params, x), gradient(params, x)};
}

}  // namespace neural_bandit
