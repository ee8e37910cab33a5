#pragma once

// Design matrix Z_t = lambda I + sum_s u_s u_s^T and the confidence widths
// built from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "neural_bandit/errors.hpp"

namespace neural_bandit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class DesignMode { full, diagonal };

// Full mode keeps Z and Z^{-1} dense, updating the inverse by Sherman-Morrison
// and refreshing it from a Cholesky factorization every `refresh_every`
// updates. Diagonal mode keeps only diag(Z); its log-det is the sum of
// per-coordinate log ratios.
class DesignMatrix {
 public:
  static constexpr std::size_t kDefaultRefresh = 512;

  DesignMatrix(Index dim, double lambda, DesignMode mode = DesignMode::full,
               std::size_t refresh_every = kDefaultRefresh)
      : dim_(dim), lambda_(lambda), mode_(mode), refresh_every_(refresh_every) {
    if (dim < 1) throw ValidationError("design matrix dimension must be positive");
    if (!(lambda > 0.0)) throw ValidationError("design matrix needs lambda > 0, got " + std::to_string(lambda));
    if (mode_ == DesignMode::full) {
      z_ = lambda * MatrixXd::Identity(dim, dim);
      z_inv_ = MatrixXd::Identity(dim, dim) / lambda;
    } else {
      diag_ = VectorXd::Constant(dim, lambda);
    }
  }

  Index dim() const { return dim_; }
  double lambda() const { return lambda_; }
  DesignMode mode() const { return mode_; }
  std::size_t updates() const { return updates_; }

  // Z += u u^T (full) or Z_kk += u_k^2 (diagonal).
  void rank_one_update(const Eigen::Ref<const VectorXd>& u) {
    check_dim(u.size());
    if (mode_ == DesignMode::diagonal) {
      const VectorXd next = diag_ + u.cwiseAbs2();
      log_det_ += (next.array() / diag_.array()).log().sum();
      diag_ = next;
    } else {
      const VectorXd zu = z_inv_ * u;
      const double denom = 1.0 + u.dot(zu);
      log_det_ += std::log(denom);
      z_.noalias() += u * u.transpose();
      z_inv_.noalias() -= (zu / denom) * zu.transpose();
      if (refresh_every_ > 0 && (updates_ + 1) % refresh_every_ == 0) refresh();
    }
    ++updates_;
  }

  // v^T Z^{-1} v.
  double quadratic_form(const Eigen::Ref<const VectorXd>& v) const {
    check_dim(v.size());
    if (mode_ == DesignMode::diagonal) return (v.cwiseAbs2().array() / diag_.array()).sum();
    return std::max(0.0, v.dot(z_inv_ * v));
  }

  VectorXd solve(const Eigen::Ref<const VectorXd>& v) const {
    check_dim(v.size());
    if (mode_ == DesignMode::diagonal) return v.cwiseQuotient(diag_);
    return z_inv_ * v;
  }

  // log(det Z / det(lambda I)), maintained incrementally.
  double log_det_ratio() const { return log_det_; }

  MatrixXd matrix() const {
    if (mode_ == DesignMode::diagonal) return diag_.asDiagonal();
    return z_;
  }

  MatrixXd inverse() const {
    if (mode_ == DesignMode::diagonal) return diag_.cwiseInverse().asDiagonal();
    return z_inv_;
  }

  // Recompute Z^{-1} and the log-det from a fresh factorization of Z.
  void refresh() {
    if (mode_ == DesignMode::diagonal) return;
    Eigen::LLT<MatrixXd> llt(z_);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("design matrix lost positive definiteness");
    z_inv_ = llt.solve(MatrixXd::Identity(dim_, dim_));
    z_inv_ = 0.5 * (z_inv_ + z_inv_.transpose()).eval();
    log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum() - static_cast<double>(dim_) * std::log(lambda_);
  }

 private:
  void check_dim(Index n) const {
    if (n != dim_) {
      throw ValidationError("vector has length " + std::to_string(n) + ", design matrix is " + std::to_string(dim_));
    }
  }

  Index dim_;
  double lambda_;
  DesignMode mode_;
  std::size_t refresh_every_;
  std::size_t updates_ = 0;
  double log_det_ = 0.0;
  MatrixXd z_;
  MatrixXd z_inv_;
  VectorXd diag_;
};

// Inputs to the NeuralUCB width schedule. C1..C3 are free constants; an
// empty `steps` means J = infinity, which removes the (1 - eta m lambda)^{J/2}
// term.
struct GammaInputs {
  double nu = 1.0;
  double delta = 0.1;
  double norm_bound = 1.0;  // S
  double lambda = 1.0;
  double width = 20.0;      // m
  double depth = 2.0;       // L
  double round = 0.0;       // t
  double eta = 1e-3;
  std::optional<double> steps;  // J
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;

  void validate() const {
    if (!(nu > 0.0)) throw ValidationError("gamma: nu must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("gamma: delta must lie in (0, 1)");
    if (!(norm_bound > 0.0)) throw ValidationError("gamma: S must be positive");
    if (!(lambda > 0.0)) throw ValidationError("gamma: lambda must be positive");
    if (!(width >= 1.0)) throw ValidationError("gamma: m must be at least 1");
    if (!(depth >= 2.0)) throw ValidationError("gamma: L must be at least 2");
    if (!(round >= 0.0)) throw ValidationError("gamma: t must be nonnegative");
    if (!(eta > 0.0)) throw ValidationError("gamma: eta must be positive");
    if (steps && !(*steps >= 0.0)) throw ValidationError("gamma: J must be nonnegative");
    if (c1 < 0.0 || c2 < 0.0 || c3 < 0.0) throw ValidationError("gamma: C1, C2, C3 must be nonnegative");
    if (eta * width * lambda >= 1.0) {
      throw ValidationError("gamma: eta * m * lambda = " + std::to_string(eta * width * lambda) + " must be < 1");
    }
  }
};

inline double gamma_theoretical(const GammaInputs& in, double log_det) {
  in.validate();
  if (!(log_det >= 0.0)) throw ValidationError("gamma: log-det ratio must be nonnegative");
  const double m = in.width;
  const double L = in.depth;
  const double t = in.round;
  const double lam = in.lambda;
  const double width_factor = std::pow(m, -1.0 / 6.0) * std::sqrt(std::log(m));

  const double inflation = std::sqrt(1.0 + in.c1 * width_factor * std::pow(L, 4) * std::pow(t, 7.0 / 6.0) *
                                               std::pow(lam, -7.0 / 6.0));
  const double radicand = log_det + in.c2 * width_factor * std::pow(L, 4) * std::pow(t, 5.0 / 3.0) *
                                        std::pow(lam, -1.0 / 6.0) -
                          2.0 * std::log(in.delta);
  if (radicand < 0.0) throw ValidationError("gamma: negative square-root argument; constants are inconsistent");
  const double confidence = in.nu * std::sqrt(radicand) + std::sqrt(lam) * in.norm_bound;

  const double decay = in.steps ? std::pow(1.0 - in.eta * m * lam, *in.steps / 2.0) : 0.0;
  const double root_t = std::sqrt(t / lam);
  const double optimization = decay * root_t + width_factor * std::pow(L, 3.5) * std::pow(t, 5.0 / 3.0) *
                                                   std::pow(lam, -5.0 / 3.0) * (1.0 + root_t);
  return inflation * confidence + (lam + in.c3 * t * L) * optimization;
}

// nu sqrt(log(det Z / det lambda I) - 2 log delta) + sqrt(lambda) S.
inline double gamma_linear(double nu, double delta, double norm_bound, double lambda, double log_det) {
  if (!(nu > 0.0)) throw ValidationError("gamma: nu must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("gamma: delta must lie in (0, 1)");
  if (!(norm_bound > 0.0)) throw ValidationError("gamma: S must be positive");
  if (!(lambda > 0.0)) throw ValidationError("gamma: lambda must be positive");
  if (!(log_det >= 0.0)) throw ValidationError("gamma: log-det ratio must be nonnegative");
  return nu * std::sqrt(log_det - 2.0 * std::log(delta)) + std::sqrt(lambda) * norm_bound;
}

struct ConstantWidth {
  double gamma = 1.0;
};

// NeuralUCB schedule; `inputs.round` is overwritten with the current round,
// and so is `inputs.steps` when the trainer runs J = t steps.
struct TheoreticalWidth {
  GammaInputs inputs;
  bool steps_follow_round = false;
};

// Closed-form ridge confidence radius used by the linearized variant.
struct LinearWidth {
  double nu = 1.0;
  double delta = 0.1;
  double norm_bound = 1.0;
};

using WidthSchedule = std::variant<ConstantWidth, TheoreticalWidth, LinearWidth>;

class WidthProvider {
 public:
  WidthProvider() = default;
  WidthProvider(WidthSchedule schedule, double lambda) : schedule_(std::move(schedule)), lambda_(lambda) {
    validate();
  }

  static WidthProvider constant(double gamma) { return WidthProvider(ConstantWidth{gamma}, 1.0); }

  // gamma_t after t updates with the given log-det ratio.
  double operator()(std::size_t round, double log_det) const {
    return std::visit(
        [&](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, ConstantWidth>) {
            return s.gamma;
          } else if constexpr (std::is_same_v<S, TheoreticalWidth>) {
            GammaInputs in = s.inputs;
            in.round = static_cast<double>(round);
            if (s.steps_follow_round) in.steps = static_cast<double>(round);
            return gamma_theoretical(in, log_det);
          } else {
            return gamma_linear(s.nu, s.delta, s.norm_bound, lambda_, log_det);
          }
        },
        schedule_);
  }

  const WidthSchedule& schedule() const { return schedule_; }

 private:
  void validate() const {
    if (const auto* c = std::get_if<ConstantWidth>(&schedule_); c && !(c->gamma >= 0.0)) {
      throw ValidationError("constant width gamma must be nonnegative");
    }
    if (const auto* t = std::get_if<TheoreticalWidth>(&schedule_)) t->inputs.validate();
    if (std::holds_alternative<LinearWidth>(schedule_)) (void)(*this)(0, 0.0);
  }

  WidthSchedule schedule_ = ConstantWidth{};
  double lambda_ = 1.0;
};

}  // namespace neural_bandit
