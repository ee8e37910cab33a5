#pragma once

// Bandit environments: synthetic reward functions over unit-ball contexts and
// classification datasets turned into k-armed bandits via the disjoint model.
// Policies see preprocess_context() output; rounds also carry the raw
// contexts for policies with no feature map (LinUCB).

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "neural_bandit/errors.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Uniform on the closed unit ball: Gaussian direction times U^{1/d} radius.
inline VectorXd sample_unit_ball(Index d, Rng& rng) {
  if (d < 1) throw ValidationError("unit-ball dimension must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  VectorXd x(d);
  double norm = 0.0;
  do {
    for (Index i = 0; i < d; ++i) x(i) = normal(rng);
    norm = x.norm();
  } while (norm == 0.0);
  const double radius = std::pow(uniform(rng), 1.0 / static_cast<double>(d));
  return x * (radius / norm);
}

// x -> [x^T, x^T]^T / sqrt(2) after scaling x to unit norm.
inline VectorXd preprocess_context(const Eigen::Ref<const VectorXd>& x) {
  const double norm = x.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("cannot preprocess a zero or non-finite context");
  const Index d = x.size();
  VectorXd out(2 * d);
  const VectorXd unit = x / (norm * std::sqrt(2.0));
  out.head(d) = unit;
  out.tail(d) = unit;
  return out;
}

// One round as seen by the harness: policy-facing contexts plus the true
// mean reward of each arm for regret accounting.
struct BanditRound {
  std::vector<VectorXd> contexts;
  std::vector<VectorXd> raw_contexts;  // before preprocessing
  std::vector<double> mean_rewards;

  std::size_t best_arm() const {
    return static_cast<std::size_t>(std::max_element(mean_rewards.begin(), mean_rewards.end()) -
                                    mean_rewards.begin());
  }
  double regret(std::size_t arm) const { return mean_rewards[best_arm()] - mean_rewards.at(arm); }
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual BanditRound next_round() = 0;
  // Observed (possibly noisy) reward for an arm of the current round.
  virtual double sample_reward(const BanditRound& round, std::size_t arm) = 0;
  virtual Index context_dim() const = 0;
  virtual Index raw_context_dim() const = 0;
  virtual std::size_t arms() const = 0;
};

enum class RewardKind { h1, h2, h3, linear };

inline RewardKind parse_reward_kind(std::string_view name) {
  if (name == "h1") return RewardKind::h1;
  if (name == "h2") return RewardKind::h2;
  if (name == "h3") return RewardKind::h3;
  if (name == "linear") return RewardKind::linear;
  throw ValidationError("unknown reward kind '" + std::string(name) + "'");
}

inline std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::h1: return "h1";
    case RewardKind::h2: return "h2";
    case RewardKind::h3: return "h3";
    case RewardKind::linear: return "linear";
  }
  return "unknown";
}

struct SyntheticSpec {
  RewardKind kind = RewardKind::h1;
  Index dim = 20;
  std::size_t arms = 4;
  double noise = 1.0;  // standard deviation of xi_t
};

// h1(x) = 10 (x^T a)^2, h2(x) = x^T A^T A x, h3(x) = cos(3 x^T a), linear(x) = x^T a,
// with a uniform on the unit ball and A_ij ~ N(0, 1), drawn once at construction.
class SyntheticEnvironment final : public Environment {
 public:
  SyntheticEnvironment(const SyntheticSpec& spec, Rng rng) : spec_(spec), rng_(std::move(rng)) {
    if (spec.dim < 1) throw ValidationError("synthetic environment needs d >= 1");
    if (spec.arms < 1) throw ValidationError("synthetic environment needs K >= 1");
    if (!(spec.noise >= 0.0)) throw ValidationError("noise scale must be nonnegative");
    a_ = sample_unit_ball(spec.dim, rng_);
    if (spec.kind == RewardKind::h2) {
      std::normal_distribution<double> normal(0.0, 1.0);
      big_a_.resize(spec.dim, spec.dim);
      for (Index j = 0; j < spec.dim; ++j)
        for (Index i = 0; i < spec.dim; ++i) big_a_(i, j) = normal(rng_);
    }
  }

  double mean_reward(const Eigen::Ref<const VectorXd>& x) const {
    if (x.size() != spec_.dim) throw ValidationError("context dimension mismatch");
    switch (spec_.kind) {
      case RewardKind::h1: {
        const double p = x.dot(a_);
        return 10.0 * p * p;
      }
      case RewardKind::h2: return (big_a_ * x).squaredNorm();
      case RewardKind::h3: return std::cos(3.0 * x.dot(a_));
      case RewardKind::linear: return x.dot(a_);
    }
    throw ValidationError("unknown reward kind");
  }

  // Mean and one noisy draw r = h(x) + xi.
  std::pair<double, double> eval_reward(const Eigen::Ref<const VectorXd>& x) {
    const double mean = mean_reward(x);
    return {mean, mean + noise()};
  }

  BanditRound next_round() override {
    BanditRound round;
    for (std::size_t a = 0; a < spec_.arms; ++a) {
      VectorXd x = sample_unit_ball(spec_.dim, rng_);
      round.mean_rewards.push_back(mean_reward(x));
      round.contexts.push_back(preprocess_context(x));
      round.raw_contexts.push_back(std::move(x));
    }
    raw_ = round.raw_contexts;
    return round;
  }

  double sample_reward(const BanditRound& round, std::size_t arm) override {
    return round.mean_rewards.at(arm) + noise();
  }

  Index context_dim() const override { return 2 * spec_.dim; }
  Index raw_context_dim() const override { return spec_.dim; }
  std::size_t arms() const override { return spec_.arms; }

  const SyntheticSpec& spec() const { return spec_; }
  const VectorXd& a() const { return a_; }
  const MatrixXd& big_a() const { return big_a_; }
  // Unpreprocessed contexts of the most recent round.
  const std::vector<VectorXd>& raw_contexts() const { return raw_; }

  // Replace the secret parameters (tests).
  void set_parameters(VectorXd a, MatrixXd big_a = {}) {
    a_ = std::move(a);
    big_a_ = std::move(big_a);
  }

 private:
  double noise() { return spec_.noise > 0.0 ? std::normal_distribution<double>(0.0, spec_.noise)(rng_) : 0.0; }

  SyntheticSpec spec_;
  Rng rng_;
  VectorXd a_;
  MatrixXd big_a_;
  std::vector<VectorXd> raw_;
};

struct LabeledRows {
  std::vector<VectorXd> features;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;  // class id -> original label
  std::size_t classes = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

}  // namespace detail

// Comma-separated file with a header row. The label column is mapped to class
// ids in order of first appearance; every other column must be numeric.
// `expected_classes` of 0 skips the consistency check.
inline LabeledRows parse_labeled_csv(std::istream& in, std::string_view label_column, std::size_t expected_classes = 0,
                                     std::ostream* warnings = &std::cerr) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("CSV input is empty; a header row is required");
  std::vector<std::string> header;
  for (auto cell : detail::split_commas(line)) header.emplace_back(cell);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw ValidationError("label column '" + std::string(label_column) + "' not found in CSV header");
  }
  const auto label_index = static_cast<std::size_t>(label_it - header.begin());

  LabeledRows rows;
  std::unordered_map<std::string, std::size_t> ids;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size()) {
      throw ValidationError("CSV row " + std::to_string(line_number) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
    }
    VectorXd features(static_cast<Index>(header.size() - 1));
    Index k = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_index) continue;
      const auto value = detail::parse_double(cells[c]);
      if (!value) {
        throw ValidationError("CSV row " + std::to_string(line_number) + ", column '" + header[c] +
                              "': non-numeric value '" + std::string(cells[c]) + "'");
      }
      features(k++) = *value;
    }
    const std::string label(cells[label_index]);
    auto [it, inserted] = ids.try_emplace(label, rows.class_names.size());
    if (inserted) rows.class_names.push_back(label);
    rows.features.push_back(std::move(features));
    rows.labels.push_back(it->second);
  }
  rows.classes = rows.class_names.size();
  if (expected_classes != 0 && expected_classes != rows.classes && warnings) {
    *warnings << "warning: expected " << expected_classes << " classes, found " << rows.classes << "; using "
              << rows.classes << "\n";
  }
  return rows;
}

inline LabeledRows load_csv(const std::string& path, std::string_view label_column, std::size_t expected_classes = 0,
                            std::ostream* warnings = &std::cerr) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open CSV file '" + path + "'");
  return parse_labeled_csv(in, label_column, expected_classes, warnings);
}

// Disjoint-model classification bandit. Round t uses row t of the (optionally
// shuffled) data; arm a's context is the unit-normalized features placed in
// block a of R^{d k}, then preprocessed to R^{2 d k}. Reward is 1 for the true
// label and 0 otherwise.
class DatasetBandit final : public Environment {
 public:
  DatasetBandit(LabeledRows rows, std::size_t classes, std::optional<Rng> shuffle = std::nullopt,
                std::ostream* warnings = &std::cerr)
      : rows_(std::move(rows)), classes_(classes) {
    if (rows_.features.empty()) throw ValidationError("dataset has no rows");
    if (classes_ < 1) throw ValidationError("dataset bandit needs at least one class");
    dim_ = rows_.features.front().size();
    if (dim_ < 1) throw ValidationError("dataset has no feature columns");
    for (std::size_t i = 0; i < rows_.features.size(); ++i) {
      if (rows_.features[i].size() != dim_) throw ValidationError("dataset row " + std::to_string(i) + " is ragged");
      if (rows_.labels.at(i) >= classes_) {
        throw ValidationError("dataset row " + std::to_string(i) + " has label " + std::to_string(rows_.labels[i]) +
                              " outside [0, " + std::to_string(classes_) + ")");
      }
      const double norm = rows_.features[i].norm();
      if (norm > 0.0) {
        rows_.features[i] /= norm;
      } else {
        if (warnings) *warnings << "warning: dataset row " << i << " is all zeros; using e_1\n";
        rows_.features[i] = VectorXd::Unit(dim_, 0);
      }
    }
    order_.resize(rows_.features.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle) std::shuffle(order_.begin(), order_.end(), *shuffle);
  }

  std::size_t rows() const { return order_.size(); }
  const std::vector<std::size_t>& order() const { return order_; }

  // Arm contexts for a feature row before preprocessing.
  std::vector<VectorXd> disjoint_contexts(const VectorXd& unit_features) const {
    std::vector<VectorXd> out;
    out.reserve(classes_);
    for (std::size_t a = 0; a < classes_; ++a) {
      VectorXd x = VectorXd::Zero(dim_ * static_cast<Index>(classes_));
      x.segment(static_cast<Index>(a) * dim_, dim_) = unit_features;
      out.push_back(std::move(x));
    }
    return out;
  }

  BanditRound next_round() override {
    if (cursor_ >= order_.size()) throw ValidationError("dataset bandit ran out of rows");
    const std::size_t row = order_[cursor_++];
    current_label_ = rows_.labels[row];
    BanditRound round;
    round.raw_contexts = disjoint_contexts(rows_.features[row]);
    for (const auto& x : round.raw_contexts) round.contexts.push_back(preprocess_context(x));
    round.mean_rewards.assign(classes_, 0.0);
    round.mean_rewards[current_label_] = 1.0;
    return round;
  }

  double sample_reward(const BanditRound& round, std::size_t arm) override { return round.mean_rewards.at(arm); }

  Index context_dim() const override { return 2 * dim_ * static_cast<Index>(classes_); }
  Index raw_context_dim() const override { return dim_ * static_cast<Index>(classes_); }
  std::size_t arms() const override { return classes_; }

 private:
  LabeledRows rows_;
  std::size_t classes_;
  Index dim_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t current_label_ = 0;
};

}  // namespace neural_bandit
