// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "neural_bandit.hpp"
#include "oracles.hpp"

namespace nb = neural_bandit;
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Verdict()> body;
};

std::string fmt(double v) { return nb::format_number(v); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("neural_bandit_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict symmetric_null_output() {
  nb::Rng rng(101);
  double worst = 0.0;
  for (nb::Index m : {4, 16, 64}) {
    for (nb::Index depth : {2, 3}) {
      nb::Rng init = nb::make_stream(static_cast<std::uint64_t>(m * 10 + depth), nb::streams::kInitialization);
      const auto theta0 = nb::init_symmetric({10, m, depth}, init);
      for (int i = 0; i < 100; ++i) {
        const VectorXd x = nb::preprocess_context(nb::sample_unit_ball(5, rng));
        worst = std::max(worst, std::abs(nb::forward(theta0, x)));
      }
    }
  }
  return {worst <= 1e-8, "max |f(x; theta0)| = " + fmt(worst)};
}

Verdict gradient_correctness() {
  const auto c = nb::check_gradient(202, 20);
  return {c.passed, "max relative error = " + fmt(c.value) + " over 20 points"};
}

Verdict ntk_convergence() {
  const auto c = nb::gram_convergence({16, 256, 4096}, 10, 303);
  bool decreasing = true;
  std::string detail = "median ||GtG - H||_F:";
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    detail += " m=" + std::to_string(c.widths[i]) + " " + fmt(c.median_distance[i]);
    if (i > 0) decreasing = decreasing && c.median_distance[i] < c.median_distance[i - 1];
  }
  detail += "; relative at m=4096 = " + fmt(c.final_relative);
  return {decreasing && c.final_relative <= 0.1, detail};
}

Verdict ntk_exact_values() {
  MatrixXd one(2, 1);
  one << 1.0, 0.0;
  const double single = nb::ntk_gram(one, 2).entries(0, 0);
  const MatrixXd pair = MatrixXd::Identity(2, 2);
  const double off = nb::ntk_gram(pair, 2).entries(0, 1);
  nb::Rng rng(404);
  const double mc_single = oracle::ntk_entry_monte_carlo_depth2(one.col(0), one.col(0), 10000000, rng);
  const double mc_off = oracle::ntk_entry_monte_carlo_depth2(pair.col(0), pair.col(1), 10000000, rng);
  const bool ok = std::abs(single - 1.5) <= 1e-9 && std::abs(off - 1.0 / std::numbers::pi) <= 1e-9 &&
                  std::abs(mc_single - single) <= 1e-3 && std::abs(mc_off - off) <= 1e-3;
  return {ok, "H(x,x) = " + fmt(single) + ", H(e1,e2) = " + fmt(off) + "; Monte Carlo " + fmt(mc_single) + ", " +
                  fmt(mc_off)};
}

Verdict design_integrity() {
  const auto d = nb::design_drift(200, 10000, 1.0, 505);
  bool potential = d.potential_sum <= 2.0 * d.log_det;
  for (std::uint64_t stream = 1; stream <= 10; ++stream) {
    for (double lambda : {0.1, 1.0, 10.0}) {
      const auto s = nb::design_drift(50, 2000, lambda, 505 + stream);
      potential = potential && s.potential_sum <= 2.0 * s.log_det;
    }
  }
  const bool ok = d.inverse_error <= 1e-8 && d.log_det_error <= 1e-6 && potential;
  return {ok, "inverse error " + fmt(d.inverse_error) + ", log-det error " + fmt(d.log_det_error) +
                  ", potential holds on 31 streams: " + (potential ? "yes" : "no")};
}

Verdict ridge_equivalence() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    nb::Rng init = nb::make_stream(600 + seed, nb::streams::kInitialization);
    const auto theta0 = nb::init_plain({8, 10, 2}, init);  // p = 90
    const auto phi = nb::ntk_feature_map(theta0);
    nb::RidgeFeatureModel model(phi, theta0.size(), 1.0, nb::DesignMode::full, nb::DesignMatrix::kDefaultRefresh);
    nb::Rng rng = nb::make_stream(600 + seed, 9);
    std::normal_distribution<double> noise(0.0, 1.0);
    MatrixXd features(200, theta0.size());
    VectorXd rewards(200);
    for (int t = 0; t < 200; ++t) {
      const VectorXd x = nb::preprocess_context(nb::sample_unit_ball(4, rng));
      rewards(t) = noise(rng);
      features.row(t) = phi(x).transpose();
      model.observe(x, rewards(t));
      const VectorXd batch = oracle::batch_ridge(features.topRows(t + 1), rewards.head(t + 1), 1.0);
      worst = std::max(worst, (model.offset() - batch).cwiseAbs().maxCoeff());
    }
  }
  bool same_actions = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    nb::NeuralUcb0Config config;
    config.width = nb::ConstantWidth{0.5};
    nb::NeuralUcb0 ucb0(config, nb::identity_feature_map(), 16);
    nb::LinUcb lin({0.5, 1.0}, 16);
    nb::SyntheticEnvironment env_a({nb::RewardKind::h1, 8, 5, 1.0}, nb::make_stream(610 + seed, 1));
    nb::SyntheticEnvironment env_b({nb::RewardKind::h1, 8, 5, 1.0}, nb::make_stream(610 + seed, 1));
    same_actions = same_actions && nb::run_bandit(env_a, ucb0, 500).actions == nb::run_bandit(env_b, lin, 500).actions;
  }
  return {worst <= 1e-8 && same_actions, "max |theta_online - theta_batch| = " + fmt(worst) +
                                             " (t <= 200, p = 90); LinUCB action match on 5 seeds: " +
                                             (same_actions ? "yes" : "no")};
}

Verdict effective_dimension_consistency() {
  nb::Rng rng(707);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  bool bounded = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 19;
    const int rank = trial % 3 == 0 ? std::max(1, n / 2) : n;
    MatrixXd a(n, rank);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < rank; ++j) a(i, j) = normal(rng);
    const nb::GramMatrix h{a * a.transpose(), 2};
    const double lambda = 1.0 + 9.0 * unif(rng);
    const double tk = n * (1.0 + 100.0 * unif(rng));
    const double chol = nb::effective_dimension(h, lambda, tk);
    worst = std::max(worst, std::abs(chol - nb::effective_dimension_spectral(h, lambda, tk)));
    worst = std::max(worst, std::abs(chol - oracle::effective_dimension(h.entries, lambda, tk)));
    bounded = bounded && chol <= n;
  }
  return {worst <= 1e-8 && bounded, "max |cholesky - eigen| = " + fmt(worst) + "; d~ <= n: " + (bounded ? "yes" : "no")};
}

Verdict train_nn_optimization() {
  nb::Rng rng = nb::make_stream(808, 99);
  const MatrixXd xs = nb::random_preprocessed_contexts(8, 4, rng);
  VectorXd rs(8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 8; ++i) rs(i) = unif(rng);
  nb::Rng init = nb::make_stream(808, nb::streams::kInitialization);
  const auto theta0 = nb::init_symmetric({4, 16, 2}, init);
  const auto r = nb::train_nn_monotone({0.01, 0.2, 500, std::nullopt}, xs, rs, theta0, 10);
  const double first = r.result.loss.front();
  const double last = r.result.loss.back();
  return {last < 0.5 * first, "eta " + fmt(r.eta) + " after " + std::to_string(r.halvings) + " halvings; loss " +
                                  fmt(first) + " -> " + fmt(last) + " in 500 steps"};
}

nb::ExperimentConfig ordering_config(const std::string& kind, const std::string& algorithm) {
  nb::ExperimentConfig c;
  c.environment.kind = kind;
  c.environment.dim = 20;
  c.environment.arms = 4;
  c.environment.rounds = 2000;
  c.environment.noise = 1.0;
  c.policy.algorithm = algorithm;
  c.policy.width = "constant";
  c.policy.width_m = 20;
  c.policy.depth = 2;
  c.policy.lambda = 1.0;
  c.policy.eta = 1e-2;
  c.policy.steps.reset();
  c.policy.batch = 50;
  c.policy.cadence = 50;
  c.repetitions = 5;
  c.seed = 9000;
  return c;
}

double best_of(const std::string& kind, const std::string& algorithm, const char* grid, std::string& detail) {
  const auto result = nb::grid_search(ordering_config(kind, algorithm), nb::ordered_json::parse(grid));
  const auto& row = result.table[result.best_index];
  detail += " " + algorithm + "@" + kind + "=" + fmt(row.regret.mean) + " " + row.assignment.dump();
  return row.regret.mean;
}

Verdict regret_ordering() {
  std::string detail;
  const double ucb_h1 = best_of("h1", "neural_ucb", R"({"policy.gamma": [0.01, 0.1, 1.0]})", detail);
  const double lin_h1 = best_of("h1", "linucb", R"({"policy.alpha": [0.1, 1.0]})", detail);
  const double greedy_h1 = best_of("h1", "neural_epsilon_greedy", R"({"policy.epsilon": [0.01, 0.1]})", detail);
  const double ucb_h3 = best_of("h3", "neural_ucb", R"({"policy.gamma": [0.01, 0.1, 1.0]})", detail);
  const double lin_h3 = best_of("h3", "linucb", R"({"policy.alpha": [0.1, 1.0]})", detail);
  return {ucb_h1 < lin_h1 && ucb_h3 < lin_h3 && ucb_h1 <= greedy_h1, "mean final regret:" + detail};
}

Verdict linucb_sublinear() {
  nb::ExperimentConfig c;
  c.environment.kind = "linear";
  c.environment.dim = 5;
  c.environment.arms = 10;
  c.environment.rounds = 2000;
  c.environment.noise = 0.1;
  c.policy.algorithm = "linucb";
  c.policy.alpha = 1.0;
  c.repetitions = 5;
  c.seed = 1000;
  double early = 0.0, late = 0.0;
  for (const auto& r : nb::run_experiment(c)) {
    early += r.cumulative_regret[499];
    late += r.cumulative_regret[1999] - r.cumulative_regret[1499];
  }
  early /= 5.0 * 500.0;
  late /= 5.0 * 500.0;
  return {late * 3.0 <= early, "mean per-round regret: first 500 " + fmt(early) + ", last 500 " + fmt(late) +
                                   " (ratio " + fmt(early / late) + ")"};
}

Verdict dataset_calibration() {
  const auto dir = scratch("calibration");
  {
    std::ofstream out(dir / "labels.csv");
    out << "f1,f2,f3,label\n";
    nb::Rng rng(1111);
    std::normal_distribution<double> normal(0.0, 1.0);
    const char* names[] = {"north", "east", "south", "west"};
    for (int i = 0; i < 10000; ++i) {
      out << nb::format_number(normal(rng)) << ',' << nb::format_number(normal(rng)) << ','
          << nb::format_number(normal(rng)) << ',' << names[i % 4] << '\n';
    }
  }
  nb::ExperimentConfig c;
  c.environment.kind = "dataset";
  c.environment.rounds = 10000;
  c.environment.dataset.path = (dir / "labels.csv").string();
  c.environment.dataset.classes = 4;
  c.policy.algorithm = "uniform";
  c.repetitions = 5;
  c.seed = 1100;
  const auto s = nb::summarize(nb::run_experiment(c));
  return {std::abs(s.mean - 7500.0) <= 0.02 * 7500.0, "mean final regret " + fmt(s.mean) + " (target 7500 +- 150)"};
}

int run_cli(const std::string& args) {
  const std::string command = std::string(NEURAL_BANDIT_CLI) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(command.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Verdict determinism() {
  const auto dir = scratch("determinism");
  const std::vector<std::pair<std::string, std::string>> configs = {
      {"neural_ucb", R"({"environment": {"kind": "h1", "d": 6, "K": 4, "T": 300, "noise": 1.0},
        "policy": {"algorithm": "neural_ucb", "m": 16, "J": 50, "batch": 50, "cadence": 50, "width": "constant",
                   "gamma": 0.1}, "repetitions": 3, "seed": 5})"},
      {"neural_epsilon_greedy", R"({"environment": {"kind": "h2", "d": 6, "K": 4, "T": 300, "noise": 1.0},
        "policy": {"algorithm": "neural_epsilon_greedy", "m": 16, "J": null, "batch": 50, "cadence": 100,
                   "epsilon": 0.1}, "repetitions": 3, "seed": 5})"},
      {"neural_ucb0", R"({"environment": {"kind": "h3", "d": 4, "K": 4, "T": 300, "noise": 1.0},
        "policy": {"algorithm": "neural_ucb0", "m": 8, "design": "diagonal"}, "repetitions": 3, "seed": 5})"},
      {"kernel_ucb", R"({"environment": {"kind": "h3", "d": 4, "K": 4, "T": 300, "noise": 1.0},
        "policy": {"algorithm": "kernel_ucb", "kernel_cap": 100}, "repetitions": 3, "seed": 5})"},
  };
  int identical = 0;
  for (const auto& [name, text] : configs) {
    const fs::path config = dir / (name + ".json");
    std::ofstream(config) << text;
    // Both runs write to the same directory; config.json records it.
    const fs::path out = dir / name;
    const std::string command = "run --config " + config.string() + " --seed 77 --out " + out.string();
    const char* files[] = {"regret.csv", "summary.csv", "config.json"};
    if (run_cli(command) != 0) continue;
    std::vector<std::string> first;
    for (const char* f : files) first.push_back(slurp(out / f));
    if (run_cli(command) != 0) continue;
    bool same = true;
    for (std::size_t i = 0; i < first.size(); ++i) same = same && !first[i].empty() && slurp(out / files[i]) == first[i];
    identical += same;
  }
  return {identical == static_cast<int>(configs.size()),
          std::to_string(identical) + "/" + std::to_string(configs.size()) + " configs byte-identical across runs"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "symmetric-init null output", 5.0, symmetric_null_output},
      {2, "gradient vs finite differences", 10.0, gradient_correctness},
      {3, "empirical Gram converges to NTK", 120.0, ntk_convergence},
      {4, "NTK exact values", 0.0, ntk_exact_values},
      {5, "design-matrix integrity", 60.0, design_integrity},
      {6, "NeuralUCB0 ridge equivalence", 0.0, ridge_equivalence},
      {7, "effective-dimension consistency", 0.0, effective_dimension_consistency},
      {8, "TrainNN optimization", 30.0, train_nn_optimization},
      {9, "qualitative regret ordering", 900.0, regret_ordering},
      {10, "LinUCB sublinear on linear rewards", 0.0, linucb_sublinear},
      {11, "dataset-bandit calibration", 0.0, dataset_calibration},
      {12, "run determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = c.budget_seconds <= 0.0 || seconds < c.budget_seconds;
    const bool passed = v.passed && in_budget;
    failures += !passed;
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.2fs", seconds);
    std::cout << (passed ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << " (" << timing;
    if (c.budget_seconds > 0.0) std::cout << " of " << c.budget_seconds << "s";
    std::cout << "): " << v.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
