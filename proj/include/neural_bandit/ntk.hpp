#pragma once

// Neural tangent kernel Gram matrices for the bias-free ReLU network, the
// empirical gradient Gram at initialization, effective dimension and the
// sqrt(h^T H^{-1} h) norm proxy.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "neural_bandit/errors.hpp"
#include "neural_bandit/network.hpp"

namespace neural_bandit {

struct NtkOptions {
  double unit_norm_tolerance = 1e-8;
  // Minimum eigenvalue under which H is treated as singular.
  double singular_threshold = 1e-10;
  // Minimum eigenvalue under which H is rejected as not PSD.
  double psd_tolerance = 1e-6;
};

struct GramMatrix {
  MatrixXd entries;
  Index depth = 0;

  Index size() const { return entries.rows(); }
};

// Both halves of the recursion at the final layer: H = (tilde + sigma) / 2.
struct NtkRecursion {
  MatrixXd sigma;  // Sigma^{(L)}
  MatrixXd tilde;  // H~^{(L)}
};

namespace detail {

// For (u, v) ~ N(0, [[a, c], [c, b]]):
//   E[relu(u) relu(v)] = sqrt(ab) (sqrt(1 - rho^2) + (pi - arccos rho) rho) / (2 pi)
//   E[relu'(u) relu'(v)] = (pi - arccos rho) / (2 pi)
struct ArcCosine {
  double relu_moment;
  double step_moment;
};

inline ArcCosine arc_cosine(double a, double b, double c) {
  const double scale = std::sqrt(a * b);
  if (scale <= 0.0) return {0.0, 0.25};
  const double rho = std::clamp(c / scale, -1.0, 1.0);
  const double angle = std::numbers::pi - std::acos(rho);
  const double two_pi = 2.0 * std::numbers::pi;
  return {scale * (std::sqrt(1.0 - rho * rho) + angle * rho) / two_pi, angle / two_pi};
}

inline void check_unit_norm(const Eigen::Ref<const MatrixXd>& contexts, double tol) {
  for (Index i = 0; i < contexts.cols(); ++i) {
    const double norm = contexts.col(i).norm();
    if (std::abs(norm - 1.0) > tol) {
      throw ValidationError("context " + std::to_string(i) + " has norm " + std::to_string(norm) +
                            "; NTK Gram needs unit-norm contexts");
    }
  }
}

}  // namespace detail

// Contexts are the columns of `contexts`.
inline NtkRecursion ntk_recursion(const Eigen::Ref<const MatrixXd>& contexts, Index depth,
                                  const NtkOptions& options = {}) {
  if (depth < 2) throw ValidationError("NTK depth must be at least 2");
  detail::check_unit_norm(contexts, options.unit_norm_tolerance);
  const Index n = contexts.cols();
  MatrixXd sigma = contexts.transpose() * contexts;
  MatrixXd tilde = sigma;
  MatrixXd next_sigma(n, n);
  MatrixXd next_tilde(n, n);
  for (Index l = 1; l < depth; ++l) {
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i <= j; ++i) {
        const auto e = detail::arc_cosine(sigma(i, i), sigma(j, j), sigma(i, j));
        const double s = 2.0 * e.relu_moment;
        const double t = 2.0 * tilde(i, j) * e.step_moment + s;
        next_sigma(i, j) = next_sigma(j, i) = s;
        next_tilde(i, j) = next_tilde(j, i) = t;
      }
    }
    sigma.swap(next_sigma);
    tilde.swap(next_tilde);
  }
  return {std::move(sigma), std::move(tilde)};
}

inline GramMatrix ntk_gram(const Eigen::Ref<const MatrixXd>& contexts, Index depth,
                           const NtkOptions& options = {}) {
  auto r = ntk_recursion(contexts, depth, options);
  return {0.5 * (r.tilde + r.sigma), depth};
}

inline GramMatrix ntk_gram(const std::vector<VectorXd>& contexts, Index depth, const NtkOptions& options = {}) {
  if (contexts.empty()) return {MatrixXd(0, 0), depth};
  MatrixXd xs(contexts.front().size(), static_cast<Index>(contexts.size()));
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].size() != xs.rows()) throw ValidationError("contexts have inconsistent dimensions");
    xs.col(static_cast<Index>(i)) = contexts[i];
  }
  return ntk_gram(xs, depth, options);
}

// G^T G with G = [g(x_1; theta0), ..., g(x_n; theta0)] / sqrt(m).
inline MatrixXd empirical_gram(const NetworkParams& params0, const Eigen::Ref<const MatrixXd>& contexts) {
  detail::check_input(params0, contexts.rows());
  const Index n = contexts.cols();
  MatrixXd g(params0.size(), n);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(params0.shape().width));
  for (Index i = 0; i < n; ++i) g.col(i) = gradient(params0, contexts.col(i)) * inv_sqrt_m;
  return g.transpose() * g;
}

inline double min_eigenvalue(const MatrixXd& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace detail {

inline void check_effective_dimension_args(const MatrixXd& h, double lambda, double tk) {
  if (h.rows() != h.cols()) throw ValidationError("Gram matrix must be square");
  if (!(lambda > 0.0)) throw ValidationError("effective dimension needs lambda > 0");
  if (!(tk >= 1.0)) throw ValidationError("effective dimension needs TK >= 1");
}

}  // namespace detail

// log det(I + H / lambda) / log(1 + TK / lambda), log det by Cholesky.
inline double effective_dimension(const GramMatrix& h, double lambda, double tk, const NtkOptions& options = {}) {
  detail::check_effective_dimension_args(h.entries, lambda, tk);
  const double min_eig = min_eigenvalue(h.entries);
  if (min_eig < -options.psd_tolerance) {
    throw ValidationError("Gram matrix is not PSD (min eigenvalue " + std::to_string(min_eig) + ")");
  }
  const Index n = h.size();
  const MatrixXd a = MatrixXd::Identity(n, n) + h.entries / lambda;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("Cholesky of I + H/lambda failed");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return log_det / std::log1p(tk / lambda);
}

// Same quantity evaluated from the spectrum: sum_k log(1 + mu_k / lambda).
inline double effective_dimension_spectral(const GramMatrix& h, double lambda, double tk) {
  detail::check_effective_dimension_args(h.entries, lambda, tk);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h.entries, Eigen::EigenvaluesOnly);
  const double log_det = (es.eigenvalues().array() / lambda).log1p().sum();
  return log_det / std::log1p(tk / lambda);
}

// sqrt(h^T H^{-1} h). Multiply by sqrt(2) for the parameter-norm bound S.
inline double rkhs_norm_proxy(const GramMatrix& h, const Eigen::Ref<const VectorXd>& rewards,
                              const NtkOptions& options = {}) {
  if (rewards.size() != h.size()) {
    throw ValidationError("reward vector has length " + std::to_string(rewards.size()) + ", Gram matrix has " +
                          std::to_string(h.size()) + " contexts");
  }
  const double min_eig = min_eigenvalue(h.entries);
  if (!(min_eig > options.singular_threshold)) {
    throw SingularMatrixError("NTK Gram matrix is singular (min eigenvalue " + std::to_string(min_eig) +
                              "); contexts violate the non-degeneracy assumption, e.g. two are parallel");
  }
  Eigen::LLT<MatrixXd> llt(h.entries);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("Cholesky of the NTK Gram matrix failed");
  return std::sqrt(std::max(0.0, rewards.dot(llt.solve(rewards))));
}

}  // namespace neural_bandit
