// neural_bandit: run bandit experiments, grid searches, NTK dumps and self-checks.
//
// Exit status: 0 success, 1 invalid input, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neural_bandit.hpp"

namespace nb = neural_bandit;

namespace {

constexpr int kValidationFailure = 1;
constexpr int kRuntimeFailure = 2;

// Numeric CSV, one vector per row. A non-numeric first row is a header.
std::vector<nb::VectorXd> read_numeric_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nb::ValidationError("cannot open '" + path + "'");
  std::vector<nb::VectorXd> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (nb::detail::trim(line).empty()) continue;
    const auto cells = nb::detail::split_commas(line);
    nb::VectorXd row(static_cast<nb::Index>(cells.size()));
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = nb::detail::parse_double(cells[c]);
      if (!v) {
        numeric = false;
        break;
      }
      row(static_cast<nb::Index>(c)) = *v;
    }
    if (!numeric) {
      if (line_number == 1) continue;
      throw nb::ValidationError(path + ":" + std::to_string(line_number) + ": non-numeric value");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw nb::ValidationError(path + ":" + std::to_string(line_number) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw nb::ValidationError("'" + path + "' has no numeric rows");
  return rows;
}

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  auto config = nb::load_config(config_path);
  if (seed) config.seed = *seed;
  if (out) config.output = *out;
  const auto results = nb::run_experiment(config);
  const auto files = nb::emit_results(results, config, config.output);
  const auto s = nb::summarize(results);
  std::cout << config.policy.algorithm << " on " << config.environment.kind << ": mean final regret "
            << nb::format_number(s.mean) << " (std " << nb::format_number(s.stddev) << ") over " << results.size()
            << " repetitions\n"
            << "wrote " << files.regret.string() << ", " << files.summary.string() << ", " << files.config.string()
            << "\n";
  return 0;
}

int grid_command(const std::string& config_path, const std::string& grid_path, std::optional<std::string> out,
                 std::size_t cap) {
  auto config = nb::load_config(config_path);
  if (out) config.output = *out;
  std::ifstream in(grid_path);
  if (!in) throw nb::ValidationError("cannot open grid file '" + grid_path + "'");
  nb::ordered_json grid;
  try {
    in >> grid;
  } catch (const nb::ordered_json::parse_error& e) {
    throw nb::ValidationError("grid file '" + grid_path + "' is not valid JSON: " + e.what());
  }
  const auto result = nb::grid_search(config, grid, cap);
  nb::emit_grid(result, config.output);
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    const auto& row = result.table[i];
    std::cout << (i == result.best_index ? "* " : "  ") << row.assignment.dump() << " -> "
              << nb::format_number(row.regret.mean) << " (" << row.status << ")\n";
  }
  std::cout << "wrote " << config.output << "/grid.csv and best_config.json\n";
  return 0;
}

int ntk_command(const std::string& contexts_path, long depth, double lambda, double tk,
                std::optional<std::string> rewards_path) {
  const auto contexts = read_numeric_rows(contexts_path);
  const auto gram = nb::ntk_gram(contexts, depth);
  std::ostringstream csv;
  csv << "gram\n";
  for (nb::Index i = 0; i < gram.size(); ++i) {
    for (nb::Index j = 0; j < gram.size(); ++j) csv << (j ? "," : "") << nb::format_number(gram.entries(i, j));
    csv << "\n";
  }
  csv << "effective_dimension," << nb::format_number(nb::effective_dimension(gram, lambda, tk)) << "\n";
  if (rewards_path) {
    const auto rows = read_numeric_rows(*rewards_path);
    nb::VectorXd h(static_cast<nb::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != 1) throw nb::ValidationError("rewards file must have one value per row");
      h(static_cast<nb::Index>(i)) = rows[i](0);
    }
    csv << "rkhs_norm_proxy," << nb::format_number(nb::rkhs_norm_proxy(gram, h)) << "\n";
  }
  std::cout << csv.str();
  return 0;
}

int check_command(std::uint64_t seed) {
  std::vector<nb::CheckOutcome> outcomes;
  outcomes.push_back(nb::check_gradient(seed));
  outcomes.push_back(nb::check_gram_convergence(seed));
  for (auto& o : nb::check_design(seed)) outcomes.push_back(std::move(o));
  bool ok = true;
  for (const auto& o : outcomes) {
    std::cout << (o.passed ? "PASS " : "FAIL ") << o.name << ": " << nb::format_number(o.value) << " (threshold "
              << nb::format_number(o.threshold) << ") " << o.detail << "\n";
    ok = ok && o.passed;
  }
  return ok ? 0 : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural contextual bandit experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment config and write regret.csv, summary.csv, config.json");
  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> run_out;
  run->add_option("--config", run_config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_seed, "Override the base seed");
  run->add_option("--out", run_out, "Override the output directory");

  auto* grid = app.add_subcommand("grid", "Grid search over config parameters");
  std::string grid_config;
  std::string grid_file;
  std::optional<std::string> grid_out;
  std::size_t grid_cap = nb::kDefaultGridCap;
  grid->add_option("--config", grid_config, "Base experiment JSON")->required()->check(CLI::ExistingFile);
  grid->add_option("--grid", grid_file, "JSON object mapping parameter paths to value arrays")
      ->required()
      ->check(CLI::ExistingFile);
  grid->add_option("--out", grid_out, "Override the output directory");
  grid->add_option("--cap", grid_cap, "Maximum number of combinations")->capture_default_str();

  auto* ntk = app.add_subcommand("ntk", "NTK Gram matrix, effective dimension and RKHS-norm proxy as CSV");
  std::string ntk_contexts;
  long ntk_depth = 2;
  double ntk_lambda = 1.0;
  double ntk_tk = 1.0;
  std::optional<std::string> ntk_rewards;
  ntk->add_option("--contexts", ntk_contexts, "CSV, one unit-norm context per row")->required()->check(CLI::ExistingFile);
  ntk->add_option("--depth", ntk_depth, "Network depth L")->required();
  ntk->add_option("--lambda", ntk_lambda, "Regularization for the effective dimension")->required();
  ntk->add_option("--tk", ntk_tk, "TK in the effective-dimension denominator")->required();
  ntk->add_option("--rewards", ntk_rewards, "CSV of h values, one per context")->check(CLI::ExistingFile);

  auto* check = app.add_subcommand("check", "Run the numerical self-checks");
  std::uint64_t check_seed = 0;
  check->add_option("--seed", check_seed, "Seed for the randomized checks")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidationFailure;
  }

  try {
    if (*run) return run_command(run_config, run_seed, run_out);
    if (*grid) return grid_command(grid_config, grid_file, grid_out, grid_cap);
    if (*ntk) return ntk_command(ntk_contexts, ntk_depth, ntk_lambda, ntk_tk, ntk_rewards);
    if (*check) return check_command(check_seed);
  } catch (const nb::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kValidationFailure;
}
