#pragma once

// Experiment orchestration: JSON configs, seeded repetitions, pseudo-regret
// accounting, grid search and result files.

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "neural_bandit/confidence.hpp"
#include "neural_bandit/environments.hpp"
#include "neural_bandit/errors.hpp"
#include "neural_bandit/kernel_ucb.hpp"
#include "neural_bandit/lin_ucb.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/neural_ucb.hpp"
#include "neural_bandit/neural_ucb0.hpp"
#include "neural_bandit/policy.hpp"
#include "neural_bandit/random.hpp"

namespace neural_bandit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Validation failure carrying every problem found, not just the first.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : ValidationError(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = "invalid config:";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
  }
  std::vector<std::string> problems_;
};

struct DatasetSource {
  std::string path;
  std::string label_column = "label";
  std::size_t classes = 0;  // 0: use observed count
  bool shuffle = true;
};

struct EnvironmentConfig {
  std::string kind = "h1";  // h1 | h2 | h3 | linear | dataset
  std::int64_t dim = 20;
  std::int64_t arms = 4;
  std::int64_t rounds = 10000;  // T
  double noise = 1.0;
  DatasetSource dataset;
};

struct PolicyConfig {
  std::string algorithm = "neural_ucb";
  double lambda = 1.0;
  std::string width = "auto";  // auto | constant | theoretical | linear
  double gamma = 1.0;
  double nu = 1.0;
  double delta = 0.1;
  double norm_bound = 1.0;  // S
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double epsilon = 0.1;
  double alpha = 1.0;
  double eta = 1e-2;
  std::optional<std::int64_t> steps;  // J; empty means J = t
  std::optional<std::int64_t> batch = 50;  // empty means full gradient
  std::int64_t cadence = 50;
  std::int64_t train_start = 0;
  std::int64_t width_m = 20;
  std::int64_t depth = 2;
  std::string design = "full";
  bool warm_start = false;
  std::int64_t refresh = 512;
  double bandwidth = 1.0;
  double beta = 1.0;
  std::int64_t kernel_cap = 1000;
};

struct ExperimentConfig {
  EnvironmentConfig environment;
  PolicyConfig policy;
  std::int64_t repetitions = 10;
  std::uint64_t seed = 0;
  std::string output = "results";
};

inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> names = {"neural_ucb",  "neural_ucb0",           "neural_epsilon_greedy",
                                                 "neural_epsilon_greedy0", "linucb", "kernel_ucb", "uniform"};
  return names;
}

namespace detail {

template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& where, std::vector<std::string>& errors) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::invalid_argument("expected a number");
      out = it->template get<double>();
    } else if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
      out = it->template get<T>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("expected true or false");
      out = it->template get<bool>();
    } else {
      if (!it->is_string()) throw std::invalid_argument("expected a string");
      out = it->template get<std::string>();
    }
  } catch (const std::exception& e) {
    errors.push_back(where + key + ": " + e.what());
  }
}

inline void read_optional_int(const json& obj, const char* key, std::optional<std::int64_t>& out,
                              const std::string& where, std::vector<std::string>& errors) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    out.reset();
  } else if (it->is_number_integer()) {
    out = it->get<std::int64_t>();
  } else {
    errors.push_back(where + key + ": expected an integer or null");
  }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where,
                           std::vector<std::string>& errors) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
      errors.push_back(where + it.key() + ": unknown field");
    }
  }
}

inline json optional_to_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  const auto& e = c.environment;
  const auto& p = c.policy;
  const bool dataset = e.kind == "dataset";
  if (!dataset && e.kind != "h1" && e.kind != "h2" && e.kind != "h3" && e.kind != "linear") {
    errors.push_back("environment.kind: unknown kind '" + e.kind + "'");
  }
  if (e.rounds < 1) errors.push_back("environment.T: must be >= 1");
  if (!dataset) {
    if (e.dim < 1) errors.push_back("environment.d: must be >= 1");
    if (e.arms < 1) errors.push_back("environment.K: must be >= 1");
    if (!(e.noise >= 0.0)) errors.push_back("environment.noise: must be >= 0");
  } else if (e.dataset.path.empty()) {
    errors.push_back("environment.dataset.path: required for dataset environments");
  }
  if (c.repetitions < 1) errors.push_back("repetitions: must be >= 1");

  if (std::find(known_algorithms().begin(), known_algorithms().end(), p.algorithm) == known_algorithms().end()) {
    errors.push_back("policy.algorithm: unknown algorithm '" + p.algorithm + "'");
  }
  if (!(p.lambda > 0.0)) errors.push_back("policy.lambda: must be > 0");
  if (p.width != "auto" && p.width != "constant" && p.width != "theoretical" && p.width != "linear") {
    errors.push_back("policy.width: must be auto, constant, theoretical or linear");
  }
  if (p.width == "theoretical" && p.algorithm != "neural_ucb") {
    errors.push_back("policy.width: theoretical schedule applies to neural_ucb only");
  }
  if (!(p.gamma >= 0.0)) errors.push_back("policy.gamma: must be >= 0");
  if (!(p.nu > 0.0)) errors.push_back("policy.nu: must be > 0");
  if (!(p.delta > 0.0 && p.delta < 1.0)) errors.push_back("policy.delta: must lie in (0, 1)");
  if (!(p.norm_bound > 0.0)) errors.push_back("policy.S: must be > 0");
  if (p.c1 < 0.0 || p.c2 < 0.0 || p.c3 < 0.0) errors.push_back("policy.C1/C2/C3: must be >= 0");
  if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) errors.push_back("policy.epsilon: must lie in [0, 1]");
  if (!(p.alpha >= 0.0)) errors.push_back("policy.alpha: must be >= 0");
  if (!(p.eta > 0.0)) errors.push_back("policy.eta: must be > 0");
  if (p.steps && *p.steps < 0) errors.push_back("policy.J: must be >= 0");
  if (p.batch && *p.batch < 1) errors.push_back("policy.batch: must be >= 1");
  if (p.cadence < 1) errors.push_back("policy.cadence: must be >= 1");
  if (p.train_start < 0) errors.push_back("policy.train_start: must be >= 0");
  if (p.width_m < 2 || p.width_m % 2 != 0) errors.push_back("policy.m: must be a positive even integer");
  if (p.depth < 2) errors.push_back("policy.L: must be >= 2");
  if (p.design != "full" && p.design != "diagonal") errors.push_back("policy.design: must be full or diagonal");
  if (p.refresh < 0) errors.push_back("policy.refresh: must be >= 0");
  if (!(p.bandwidth > 0.0)) errors.push_back("policy.sigma: must be > 0");
  if (!(p.beta >= 0.0)) errors.push_back("policy.beta: must be >= 0");
  if (p.kernel_cap < 1) errors.push_back("policy.kernel_cap: must be >= 1");
  if (p.algorithm == "neural_ucb" && p.width == "theoretical" && p.eta * p.width_m * p.lambda >= 1.0) {
    errors.push_back("policy.eta: theoretical width needs eta * m * lambda < 1");
  }
  return errors;
}

inline ExperimentConfig config_from_json(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError({"config must be a JSON object"});
  detail::reject_unknown(j, {"environment", "policy", "repetitions", "seed", "output"}, "", errors);
  detail::read_field(j, "repetitions", c.repetitions, "", errors);
  detail::read_field(j, "seed", c.seed, "", errors);
  detail::read_field(j, "output", c.output, "", errors);

  if (auto it = j.find("environment"); it != j.end()) {
    if (!it->is_object()) {
      errors.emplace_back("environment: expected an object");
    } else {
      const std::string w = "environment.";
      auto& e = c.environment;
      detail::reject_unknown(*it, {"kind", "d", "K", "T", "noise", "dataset"}, w, errors);
      detail::read_field(*it, "kind", e.kind, w, errors);
      detail::read_field(*it, "d", e.dim, w, errors);
      detail::read_field(*it, "K", e.arms, w, errors);
      detail::read_field(*it, "T", e.rounds, w, errors);
      detail::read_field(*it, "noise", e.noise, w, errors);
      if (auto ds = it->find("dataset"); ds != it->end() && !ds->is_null()) {
        const std::string wd = w + "dataset.";
        detail::reject_unknown(*ds, {"path", "label_column", "k", "shuffle"}, wd, errors);
        detail::read_field(*ds, "path", e.dataset.path, wd, errors);
        detail::read_field(*ds, "label_column", e.dataset.label_column, wd, errors);
        std::int64_t k = static_cast<std::int64_t>(e.dataset.classes);
        detail::read_field(*ds, "k", k, wd, errors);
        if (k < 0) errors.push_back(wd + "k: must be >= 0");
        e.dataset.classes = static_cast<std::size_t>(std::max<std::int64_t>(k, 0));
        detail::read_field(*ds, "shuffle", e.dataset.shuffle, wd, errors);
      }
    }
  }

  if (auto it = j.find("policy"); it != j.end()) {
    if (!it->is_object()) {
      errors.emplace_back("policy: expected an object");
    } else {
      const std::string w = "policy.";
      auto& p = c.policy;
      detail::reject_unknown(*it,
                             {"algorithm", "lambda", "width", "gamma", "nu", "delta", "S", "C1", "C2", "C3", "epsilon",
                              "alpha", "eta", "J", "batch", "cadence", "train_start", "m", "L", "design", "warm_start",
                              "refresh", "sigma", "beta", "kernel_cap"},
                             w, errors);
      detail::read_field(*it, "algorithm", p.algorithm, w, errors);
      detail::read_field(*it, "lambda", p.lambda, w, errors);
      detail::read_field(*it, "width", p.width, w, errors);
      detail::read_field(*it, "gamma", p.gamma, w, errors);
      detail::read_field(*it, "nu", p.nu, w, errors);
      detail::read_field(*it, "delta", p.delta, w, errors);
      detail::read_field(*it, "S", p.norm_bound, w, errors);
      detail::read_field(*it, "C1", p.c1, w, errors);
      detail::read_field(*it, "C2", p.c2, w, errors);
      detail::read_field(*it, "C3", p.c3, w, errors);
      detail::read_field(*it, "epsilon", p.epsilon, w, errors);
      detail::read_field(*it, "alpha", p.alpha, w, errors);
      detail::read_field(*it, "eta", p.eta, w, errors);
      detail::read_optional_int(*it, "J", p.steps, w, errors);
      detail::read_optional_int(*it, "batch", p.batch, w, errors);
      detail::read_field(*it, "cadence", p.cadence, w, errors);
      detail::read_field(*it, "train_start", p.train_start, w, errors);
      detail::read_field(*it, "m", p.width_m, w, errors);
      detail::read_field(*it, "L", p.depth, w, errors);
      detail::read_field(*it, "design", p.design, w, errors);
      detail::read_field(*it, "warm_start", p.warm_start, w, errors);
      detail::read_field(*it, "refresh", p.refresh, w, errors);
      detail::read_field(*it, "sigma", p.bandwidth, w, errors);
      detail::read_field(*it, "beta", p.beta, w, errors);
      detail::read_field(*it, "kernel_cap", p.kernel_cap, w, errors);
    }
  }

  for (auto& e : validate(c)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

inline ordered_json config_to_json(const ExperimentConfig& c) {
  const auto& e = c.environment;
  const auto& p = c.policy;
  ordered_json env = {{"kind", e.kind}, {"d", e.dim}, {"K", e.arms}, {"T", e.rounds}, {"noise", e.noise}};
  if (e.kind == "dataset") {
    env["dataset"] = {{"path", e.dataset.path},
                      {"label_column", e.dataset.label_column},
                      {"k", e.dataset.classes},
                      {"shuffle", e.dataset.shuffle}};
  }
  ordered_json pol = {{"algorithm", p.algorithm},
                      {"lambda", p.lambda},
                      {"width", p.width},
                      {"gamma", p.gamma},
                      {"nu", p.nu},
                      {"delta", p.delta},
                      {"S", p.norm_bound},
                      {"C1", p.c1},
                      {"C2", p.c2},
                      {"C3", p.c3},
                      {"epsilon", p.epsilon},
                      {"alpha", p.alpha},
                      {"eta", p.eta},
                      {"J", detail::optional_to_json(p.steps)},
                      {"batch", detail::optional_to_json(p.batch)},
                      {"cadence", p.cadence},
                      {"train_start", p.train_start},
                      {"m", p.width_m},
                      {"L", p.depth},
                      {"design", p.design},
                      {"warm_start", p.warm_start},
                      {"refresh", p.refresh},
                      {"sigma", p.bandwidth},
                      {"beta", p.beta},
                      {"kernel_cap", p.kernel_cap}};
  return {{"environment", env}, {"policy", pol}, {"repetitions", c.repetitions}, {"seed", c.seed},
          {"output", c.output}};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  auto config = config_from_json(j);
  // Dataset paths are relative to the config file.
  auto& data = config.environment.dataset.path;
  if (!data.empty() && std::filesystem::path(data).is_relative()) {
    data = (std::filesystem::path(path).parent_path() / data).lexically_normal().string();
  }
  return config;
}

struct RunResult {
  std::vector<double> instant_regret;
  std::vector<double> cumulative_regret;
  std::vector<std::size_t> actions;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  double final_regret() const { return cumulative_regret.empty() ? 0.0 : cumulative_regret.back(); }
};

// Which contexts a policy is fed. LinUCB works on the raw contexts, everything
// else on the preprocessed ones.
enum class ContextView { preprocessed, raw };

inline ContextView context_view(const PolicyConfig& p) {
  return p.algorithm == "linucb" ? ContextView::raw : ContextView::preprocessed;
}

inline Index policy_context_dim(const Environment& env, ContextView view) {
  return view == ContextView::raw ? env.raw_context_dim() : env.context_dim();
}

// Play T rounds. Regret is the gap between the best and the chosen arm's
// true mean reward.
inline RunResult run_bandit(Environment& env, Policy& policy, std::size_t rounds,
                            ContextView view = ContextView::preprocessed) {
  RunResult result;
  result.instant_regret.reserve(rounds);
  result.cumulative_regret.reserve(rounds);
  result.actions.reserve(rounds);
  const auto start = std::chrono::steady_clock::now();
  double total = 0.0;
  for (std::size_t t = 0; t < rounds; ++t) {
    const BanditRound round = env.next_round();
    const auto& contexts = view == ContextView::raw ? round.raw_contexts : round.contexts;
    const std::size_t action = policy.select(contexts).action;
    if (action >= contexts.size()) throw std::logic_error("policy returned an out-of-range action");
    const double reward = env.sample_reward(round, action);
    policy.update(contexts[action], reward);
    const double regret = round.regret(action);
    total += regret;
    result.instant_regret.push_back(regret);
    result.cumulative_regret.push_back(total);
    result.actions.push_back(action);
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline DesignMode parse_design_mode(const std::string& name) {
  return name == "diagonal" ? DesignMode::diagonal : DesignMode::full;
}

inline TrainingSchedule training_schedule(const PolicyConfig& p) {
  TrainingSchedule s;
  s.lambda = p.lambda;
  s.eta = p.eta;
  if (p.steps) s.steps = static_cast<std::size_t>(*p.steps);
  if (p.batch) {
    s.batch = static_cast<std::size_t>(*p.batch);
  } else {
    s.batch.reset();
  }
  s.cadence = static_cast<std::size_t>(p.cadence);
  s.start_round = static_cast<std::size_t>(p.train_start);
  s.warm_start = p.warm_start;
  return s;
}

inline WidthSchedule neural_ucb_width(const PolicyConfig& p) {
  if (p.width == "theoretical") {
    TheoreticalWidth w;
    w.inputs.nu = p.nu;
    w.inputs.delta = p.delta;
    w.inputs.norm_bound = p.norm_bound;
    w.inputs.lambda = p.lambda;
    w.inputs.width = static_cast<double>(p.width_m);
    w.inputs.depth = static_cast<double>(p.depth);
    w.inputs.eta = p.eta;
    if (p.steps) {
      w.inputs.steps = static_cast<double>(*p.steps);
    } else {
      w.steps_follow_round = true;
    }
    w.inputs.c1 = p.c1;
    w.inputs.c2 = p.c2;
    w.inputs.c3 = p.c3;
    return w;
  }
  if (p.width == "linear") return LinearWidth{p.nu, p.delta, p.norm_bound};
  return ConstantWidth{p.gamma};
}

// Build the configured policy for contexts of dimension `context_dim`.
inline std::unique_ptr<Policy> make_policy(const PolicyConfig& p, Index context_dim, std::uint64_t seed) {
  Rng init = make_stream(seed, streams::kInitialization);
  Rng rng = make_stream(seed, streams::kPolicy);
  const NetworkShape shape{context_dim, static_cast<Index>(p.width_m), static_cast<Index>(p.depth)};
  const auto design = parse_design_mode(p.design);
  const auto refresh = static_cast<std::size_t>(p.refresh);

  if (p.algorithm == "neural_ucb") {
    NeuralUcbConfig c{shape, training_schedule(p), design, refresh, neural_ucb_width(p)};
    return std::make_unique<NeuralUcb>(c, init_symmetric(shape, init), std::move(rng));
  }
  if (p.algorithm == "neural_epsilon_greedy") {
    NeuralGreedyConfig c{shape, training_schedule(p), p.epsilon};
    return std::make_unique<NeuralGreedy>(c, init_symmetric(shape, init), std::move(rng));
  }
  if (p.algorithm == "neural_ucb0") {
    NeuralUcb0Config c{p.lambda, design, refresh,
                       p.width == "constant" ? WidthSchedule(ConstantWidth{p.gamma})
                                             : WidthSchedule(LinearWidth{p.nu, p.delta, p.norm_bound})};
    return std::make_unique<NeuralUcb0>(c, init_plain(shape, init));
  }
  if (p.algorithm == "neural_epsilon_greedy0") {
    NeuralGreedy0Config c{p.lambda, design, refresh, p.epsilon};
    return std::make_unique<NeuralGreedy0>(c, init_plain(shape, init), std::move(rng));
  }
  if (p.algorithm == "linucb") return std::make_unique<LinUcb>(LinUcbConfig{p.alpha, p.lambda}, context_dim);
  if (p.algorithm == "kernel_ucb") {
    return std::make_unique<KernelUcb>(
        KernelUcbConfig{p.bandwidth, p.lambda, p.beta, static_cast<std::size_t>(p.kernel_cap)});
  }
  if (p.algorithm == "uniform") return std::make_unique<UniformPolicy>(std::move(rng));
  throw ValidationError("unknown algorithm '" + p.algorithm + "'");
}

// Rows loaded once per experiment and shared by repetitions.
struct PreparedExperiment {
  ExperimentConfig config;
  std::optional<LabeledRows> rows;
  std::size_t classes = 0;
};

inline PreparedExperiment prepare(const ExperimentConfig& config) {
  if (auto errors = validate(config); !errors.empty()) throw ConfigError(std::move(errors));
  PreparedExperiment prepared{config, std::nullopt, 0};
  const auto& e = config.environment;
  if (e.kind == "dataset") {
    auto rows = load_csv(e.dataset.path, e.dataset.label_column, e.dataset.classes);
    prepared.classes = rows.classes;
    if (static_cast<std::size_t>(e.rounds) > rows.features.size()) {
      throw ConfigError({"environment.T: " + std::to_string(e.rounds) + " exceeds the " +
                         std::to_string(rows.features.size()) + " dataset rows"});
    }
    prepared.rows = std::move(rows);
  }
  return prepared;
}

inline std::unique_ptr<Environment> make_environment(const PreparedExperiment& prepared, std::uint64_t seed) {
  const auto& e = prepared.config.environment;
  if (e.kind == "dataset") {
    std::optional<Rng> shuffle;
    if (e.dataset.shuffle) shuffle = make_stream(seed, streams::kShuffle);
    return std::make_unique<DatasetBandit>(*prepared.rows, prepared.classes, std::move(shuffle));
  }
  SyntheticSpec spec{parse_reward_kind(e.kind), static_cast<Index>(e.dim), static_cast<std::size_t>(e.arms), e.noise};
  return std::make_unique<SyntheticEnvironment>(spec, make_stream(seed, streams::kEnvironment));
}

inline std::size_t worker_count(std::size_t jobs) {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("NEURAL_BANDIT_THREADS")) {
    try {
      const long v = std::stol(cap);
      if (v >= 1) threads = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::min(threads, jobs));
}

// Run `jobs` independent tasks on up to `threads` workers; results keep index
// order and the first failure (by index) is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t jobs, std::size_t threads, const std::function<R(std::size_t)>& task) {
  std::vector<std::optional<R>> slots(jobs);
  std::vector<std::exception_ptr> failures(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      try {
        slots[i] = task(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  std::vector<R> out;
  out.reserve(jobs);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Repetition r uses seed = base seed + r.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& config,
                                             std::optional<std::size_t> threads = std::nullopt) {
  const PreparedExperiment prepared = prepare(config);
  const auto reps = static_cast<std::size_t>(config.repetitions);
  return parallel_map<RunResult>(reps, threads.value_or(worker_count(reps)), [&](std::size_t rep) {
    const std::uint64_t seed = config.seed + rep;
    auto env = make_environment(prepared, seed);
    const ContextView view = context_view(config.policy);
    auto policy = make_policy(config.policy, policy_context_dim(*env, view), seed);
    RunResult r = run_bandit(*env, *policy, static_cast<std::size_t>(config.environment.rounds), view);
    r.seed = seed;
    return r;
  });
}

struct RegretSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one repetition
};

inline RegretSummary summarize(const std::vector<RunResult>& results) {
  RegretSummary s;
  if (results.empty()) return s;
  for (const auto& r : results) s.mean += r.final_regret();
  s.mean /= static_cast<double>(results.size());
  if (results.size() > 1) {
    double ss = 0.0;
    for (const auto& r : results) ss += (r.final_regret() - s.mean) * (r.final_regret() - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(results.size() - 1));
  }
  return s;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

}  // namespace detail

struct EmittedFiles {
  std::filesystem::path regret;
  std::filesystem::path summary;
  std::filesystem::path config;
};

// regret.csv (round,rep,instant_regret,cum_regret), summary.csv and config.json
// in `dir`. Output depends only on the inputs.
inline EmittedFiles emit_results(const std::vector<RunResult>& results, const ExperimentConfig& config,
                                 const std::filesystem::path& dir) {
  detail::ensure_directory(dir);
  EmittedFiles files{dir / "regret.csv", dir / "summary.csv", dir / "config.json"};

  std::string regret = "round,rep,instant_regret,cum_regret\n";
  for (std::size_t rep = 0; rep < results.size(); ++rep) {
    const auto& r = results[rep];
    for (std::size_t t = 0; t < r.instant_regret.size(); ++t) {
      regret += std::to_string(t + 1) + ',' + std::to_string(rep) + ',' + format_number(r.instant_regret[t]) + ',' +
                format_number(r.cumulative_regret[t]) + '\n';
    }
  }
  detail::write_file(files.regret, regret);

  const auto s = summarize(results);
  detail::write_file(files.summary, "algorithm,repetitions,mean_final_regret,std_final_regret\n" +
                                        config.policy.algorithm + ',' + std::to_string(results.size()) + ',' +
                                        format_number(s.mean) + ',' + format_number(s.stddev) + '\n');

  ordered_json snapshot = config_to_json(config);
  ordered_json seeds = ordered_json::array();
  for (const auto& r : results) seeds.push_back(r.seed);
  snapshot["repetition_seeds"] = seeds;
  detail::write_file(files.config, snapshot.dump(2) + "\n");
  return files;
}

struct GridRow {
  ordered_json assignment;  // parameter path -> value
  ExperimentConfig config;
  RegretSummary regret;
  std::string status = "ok";
};

struct GridResult {
  ExperimentConfig best;
  std::size_t best_index = 0;
  std::vector<GridRow> table;
};

inline constexpr std::size_t kDefaultGridCap = 256;

namespace detail {

inline void assign_path(ordered_json& doc, const std::string& path, const ordered_json& value) {
  ordered_json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("grid parameter path '" + path + "' is malformed");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = ordered_json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace detail

// Expand the grid (first key outermost, values in declared order) into
// configs, validating each.
inline std::vector<GridRow> expand_grid(const ExperimentConfig& base, const ordered_json& grid,
                                        std::size_t cap = kDefaultGridCap) {
  if (!grid.is_object() || grid.empty()) throw ValidationError("grid must be a nonempty JSON object");
  std::size_t product = 1;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it->is_array() || it->empty()) {
      throw ValidationError("grid entry '" + it.key() + "' must be a nonempty array");
    }
    product *= it->size();
    if (product > cap) break;
  }
  if (product > cap) {
    std::size_t full = 1;
    for (const auto& v : grid) full *= v.size();
    throw ValidationError("grid has " + std::to_string(full) + " combinations, cap is " + std::to_string(cap));
  }

  std::vector<std::string> keys;
  std::vector<const ordered_json*> values;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    keys.push_back(it.key());
    values.push_back(&it.value());
  }
  std::vector<GridRow> rows;
  std::vector<std::size_t> index(keys.size(), 0);
  const ordered_json base_doc = config_to_json(base);
  for (std::size_t n = 0; n < product; ++n) {
    GridRow row;
    row.assignment = ordered_json::object();
    ordered_json doc = base_doc;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const auto& v = (*values[k])[index[k]];
      row.assignment[keys[k]] = v;
      detail::assign_path(doc, keys[k], v);
    }
    row.config = config_from_json(json::parse(doc.dump()));
    rows.push_back(std::move(row));
    for (std::size_t k = keys.size(); k-- > 0;) {
      if (++index[k] < values[k]->size()) break;
      index[k] = 0;
    }
  }
  return rows;
}

// Evaluate every combination; lowest mean final regret wins, ties to the
// earliest. Combinations whose training diverges are kept in the table with
// status "diverged" and never win.
inline GridResult grid_search(const ExperimentConfig& base, const ordered_json& grid,
                              std::size_t cap = kDefaultGridCap, std::optional<std::size_t> threads = std::nullopt) {
  GridResult result;
  result.table = expand_grid(base, grid, cap);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    auto& row = result.table[i];
    try {
      row.regret = summarize(run_experiment(row.config, threads));
    } catch (const DivergenceError& e) {
      row.status = "diverged";
      row.regret = {std::numeric_limits<double>::infinity(), 0.0};
      continue;
    }
    if (!best || row.regret.mean < result.table[*best].regret.mean) best = i;
  }
  if (!best) throw std::runtime_error("every grid combination diverged");
  result.best_index = *best;
  result.best = result.table[*best].config;
  return result;
}

inline void emit_grid(const GridResult& grid, const std::filesystem::path& dir) {
  detail::ensure_directory(dir);
  std::string csv = "combination";
  if (!grid.table.empty()) {
    for (auto it = grid.table.front().assignment.begin(); it != grid.table.front().assignment.end(); ++it) {
      csv += ',' + it.key();
    }
  }
  csv += ",mean_final_regret,std_final_regret,status\n";
  for (std::size_t i = 0; i < grid.table.size(); ++i) {
    const auto& row = grid.table[i];
    csv += std::to_string(i);
    for (const auto& v : row.assignment) csv += ',' + (v.is_number() ? format_number(v.get<double>()) : v.dump());
    csv += ',' + format_number(row.regret.mean) + ',' + format_number(row.regret.stddev) + ',' + row.status + '\n';
  }
  detail::write_file(dir / "grid.csv", csv);
  detail::write_file(dir / "best_config.json", config_to_json(grid.best).dump(2) + "\n");
}

}  // namespace neural_bandit
