#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "neural_bandit/errors.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

using Eigen::VectorXd;

struct Selection {
  std::size_t action = 0;
  std::vector<double> scores;
};

// A contextual bandit learner. Each round the harness calls select() on the
// K arm contexts and then update() with the chosen context and its reward.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  virtual Selection select(std::span<const VectorXd> contexts) = 0;
  virtual void update(const VectorXd& context, double reward) = 0;
  // Number of update() calls so far.
  virtual std::size_t round() const = 0;
};

// Index of the largest score; ties go to the lowest index.
inline std::size_t argmax_first(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < scores.size(); ++a) {
    if (scores[a] > scores[best]) best = a;
  }
  return best;
}

inline void require_contexts(std::span<const VectorXd> contexts) {
  if (contexts.empty()) throw ValidationError("select needs at least one context");
}

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(Rng rng) : rng_(std::move(rng)) {}

  std::string name() const override { return "uniform"; }

  Selection select(std::span<const VectorXd> contexts) override {
    require_contexts(contexts);
    std::uniform_int_distribution<std::size_t> pick(0, contexts.size() - 1);
    Selection s;
    s.action = pick(rng_);
    s.scores.assign(contexts.size(), 0.0);
    return s;
  }

  void update(const VectorXd&, double) override { ++round_; }
  std::size_t round() const override { return round_; }

 private:
  Rng rng_;
  std::size_t round_ = 0;
};

}  // namespace neural_bandit
