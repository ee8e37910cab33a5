#pragma once

// Self-checks behind `neural_bandit check`: backprop against central finite
// differences, empirical Gram convergence toward the NTK, and Sherman-Morrison
// drift of the design matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "neural_bandit/confidence.hpp"
#include "neural_bandit/environments.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/ntk.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

struct CheckOutcome {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

// Smallest |pre-activation| over all hidden units for input x.
inline double min_abs_preactivation(const NetworkParams& params, const VectorXd& x) {
  const auto a = detail::propagate(params, x);
  double out = std::numeric_limits<double>::infinity();
  for (const auto& z : a.pre) out = std::min(out, z.cwiseAbs().minCoeff());
  return out;
}

// Random (theta, x) with every pre-activation at least `margin` from zero.
inline std::pair<NetworkParams, VectorXd> sample_smooth_point(const NetworkShape& shape, Rng& rng,
                                                             double margin = 1e-3) {
  std::normal_distribution<double> jitter(0.0, 0.1);
  while (true) {
    NetworkParams params = init_plain(shape, rng);
    for (Index i = 0; i < params.size(); ++i) params.flat()(i) += jitter(rng) / std::sqrt(double(shape.width));
    VectorXd x = preprocess_context(sample_unit_ball(shape.input_dim / 2, rng));
    x += 0.05 * sample_unit_ball(shape.input_dim, rng);
    if (min_abs_preactivation(params, x) >= margin) return {std::move(params), std::move(x)};
  }
}

inline double gradient_fd_error(const NetworkParams& params, const VectorXd& x, double h = 1e-5) {
  const VectorXd g = gradient(params, x);
  NetworkParams probe = params;
  double worst = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    const double keep = probe.flat()(i);
    probe.flat()(i) = keep + h;
    const double up = forward(probe, x);
    probe.flat()(i) = keep - h;
    const double down = forward(probe, x);
    probe.flat()(i) = keep;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(g(i)), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(g(i) - fd) / scale);
  }
  return worst;
}

inline CheckOutcome check_gradient(std::uint64_t seed, int points = 20) {
  Rng rng = make_stream(seed, 11);
  const NetworkShape shape{4, 8, 3};
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    auto [params, x] = sample_smooth_point(shape, rng);
    worst = std::max(worst, gradient_fd_error(params, x));
  }
  return {"gradient vs central differences (d=4, m=8, L=3)", worst, 1e-4, worst <= 1e-4,
          std::to_string(points) + " points"};
}

// Unit-norm half-duplicated contexts in R^d, as columns.
inline MatrixXd random_preprocessed_contexts(Index n, Index d, Rng& rng) {
  MatrixXd xs(d, n);
  for (Index i = 0; i < n; ++i) xs.col(i) = preprocess_context(sample_unit_ball(d / 2, rng));
  return xs;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct GramConvergence {
  std::vector<Index> widths;
  std::vector<double> median_distance;  // ||G^T G - H||_F
  double final_relative = 0.0;          // last median / ||H||_F
};

// Median over seeds of ||G^T G - H||_F with theta0 from the plain
// initialization, whose gradient Gram converges to H.
inline GramConvergence gram_convergence(const std::vector<Index>& widths, int seeds, std::uint64_t base_seed,
                                        Index n = 5, Index d = 4, Index depth = 2) {
  Rng ctx_rng = make_stream(base_seed, 21);
  const MatrixXd xs = random_preprocessed_contexts(n, d, ctx_rng);
  const MatrixXd h = ntk_gram(xs, depth).entries;
  GramConvergence out;
  out.widths = widths;
  for (Index m : widths) {
    std::vector<double> dist;
    for (int s = 0; s < seeds; ++s) {
      Rng rng = make_stream(base_seed + static_cast<std::uint64_t>(s), 22 + static_cast<std::uint64_t>(m));
      const auto theta0 = init_plain({d, m, depth}, rng);
      dist.push_back((empirical_gram(theta0, xs) - h).norm());
    }
    out.median_distance.push_back(median(std::move(dist)));
  }
  out.final_relative = out.median_distance.back() / h.norm();
  return out;
}

inline CheckOutcome check_gram_convergence(std::uint64_t seed, int seeds = 10) {
  const auto c = gram_convergence({16, 256, 4096}, seeds, seed);
  bool decreasing = true;
  for (std::size_t i = 1; i < c.median_distance.size(); ++i)
    decreasing = decreasing && c.median_distance[i] < c.median_distance[i - 1];
  std::string detail = "median ||GtG - H||_F:";
  for (std::size_t i = 0; i < c.widths.size(); ++i)
    detail += " m=" + std::to_string(c.widths[i]) + ":" + std::to_string(c.median_distance[i]);
  return {"empirical Gram -> NTK (relative Frobenius at largest m)", c.final_relative, 0.1,
          decreasing && c.final_relative <= 0.1, detail};
}

struct DesignDrift {
  double inverse_error = 0.0;  // max |Z^{-1}_maintained - Z^{-1}_direct|
  double log_det_error = 0.0;
  double potential_sum = 0.0;  // sum min(u^T Z^{-1} u, 1) before each update
  double log_det = 0.0;
  double min_eigenvalue = 0.0;
};

inline DesignDrift design_drift(Index p, std::size_t updates, double lambda, std::uint64_t seed) {
  Rng rng = make_stream(seed, 31);
  std::normal_distribution<double> normal(0.0, 1.0);
  DesignMatrix z(p, lambda);
  DesignDrift out;
  VectorXd u(p);
  for (std::size_t k = 0; k < updates; ++k) {
    for (Index i = 0; i < p; ++i) u(i) = normal(rng);
    u /= std::sqrt(static_cast<double>(p));
    out.potential_sum += std::min(z.quadratic_form(u), 1.0);
    z.rank_one_update(u);
  }
  const MatrixXd dense = z.matrix();
  Eigen::LLT<MatrixXd> llt(dense);
  const MatrixXd direct_inverse = llt.solve(MatrixXd::Identity(p, p));
  const double direct_log_det =
      2.0 * llt.matrixLLT().diagonal().array().log().sum() - static_cast<double>(p) * std::log(lambda);
  out.inverse_error = (z.inverse() - direct_inverse).cwiseAbs().maxCoeff();
  out.log_det = z.log_det_ratio();
  out.log_det_error = std::abs(out.log_det - direct_log_det);
  out.min_eigenvalue = min_eigenvalue(dense);
  return out;
}

inline std::vector<CheckOutcome> check_design(std::uint64_t seed, Index p = 200, std::size_t updates = 10000) {
  const auto d = design_drift(p, updates, 1.0, seed);
  const std::string where = "p=" + std::to_string(p) + ", " + std::to_string(updates) + " updates";
  return {
      {"Sherman-Morrison inverse drift", d.inverse_error, 1e-8, d.inverse_error <= 1e-8, where},
      {"running log-det drift", d.log_det_error, 1e-6, d.log_det_error <= 1e-6, where},
      {"elliptical potential (sum - 2 log det ratio)", d.potential_sum - 2.0 * d.log_det, 0.0,
       d.potential_sum <= 2.0 * d.log_det, where},
  };
}

}  // namespace neural_bandit
