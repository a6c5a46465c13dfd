// invbench: run the linear invariance benchmark problems and render results.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "invbench/errors.hpp"
#include "invbench/harness.hpp"
#include "invbench/problems.hpp"
#include "invbench/reporting.hpp"
#include "invbench/selftest.hpp"

namespace fs = std::filesystem;
using namespace invbench;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIncomplete = 3;
constexpr int kExitSelftestFailed = 4;

struct CliConfig {
  std::vector<std::string> problems;
  std::vector<std::string> methods;
  int d_inv = 5;
  int d_spu = 5;
  int n_env = 3;
  int n_per_env = 10000;
  int n_trials = 20;
  int n_repetitions = 50;
  int steps = 10000;
  std::uint64_t seed = 0;
  int workers = default_workers();
  std::string out = ".";
  // sweep
  std::string axis;
  std::vector<int> values;
  // table / plot-data
  std::string records;
  bool csv = false;
  int cases = 100;
};

void add_grid_options(CLI::App* cmd, CliConfig& cfg) {
  cmd->add_option("-p,--problem", cfg.problems, "Problem(s): example1 .. example3s (default: all six)");
  cmd->add_option("-m,--method", cfg.methods, "Method(s): ERM IRMv1 IGA ANDMask Oracle (default: all)");
  cmd->add_option("--d-inv", cfg.d_inv, "Invariant dimensions")->capture_default_str();
  cmd->add_option("--d-spu", cfg.d_spu, "Spurious dimensions")->capture_default_str();
  cmd->add_option("--n-env", cfg.n_env, "Number of environments")->capture_default_str();
  cmd->add_option("--n-per-env", cfg.n_per_env, "Examples per environment and split")->capture_default_str();
  cmd->add_option("--trials", cfg.n_trials, "Random-search trials per method")->capture_default_str();
  cmd->add_option("--reps", cfg.n_repetitions, "Repetitions")->capture_default_str();
  cmd->add_option("--steps", cfg.steps, "Full-batch Adam steps")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  cmd->add_option("-j,--workers", cfg.workers, "Worker threads (default: $INVBENCH_WORKERS or 1)");
  cmd->add_option("-o,--out", cfg.out, "Output directory")->capture_default_str();
}

std::vector<ProblemSpec> selected_problems(const CliConfig& cfg) {
  std::vector<ProblemSpec> specs;
  if (cfg.problems.empty()) {
    specs = all_problems();
  } else {
    std::set<std::string> seen;
    for (const auto& name : cfg.problems) {
      auto spec = ProblemSpec::parse(name);
      if (seen.insert(spec.id()).second) specs.push_back(spec);
    }
    std::sort(specs.begin(), specs.end(),
              [](const ProblemSpec& a, const ProblemSpec& b) { return problem_label(a) < problem_label(b); });
  }
  for (auto& spec : specs) {
    spec.d_inv = cfg.d_inv;
    spec.d_spu = cfg.d_spu;
    spec.n_env = cfg.n_env;
    spec.n_per_env = cfg.n_per_env;
    spec.validate();
  }
  return specs;
}

std::vector<Method> selected_methods(const CliConfig& cfg) {
  if (cfg.methods.empty()) return {kAllMethods.begin(), kAllMethods.end()};
  std::set<Method> chosen;
  for (const auto& name : cfg.methods) chosen.insert(parse_method(name));
  std::vector<Method> out;
  for (Method m : kAllMethods) {
    if (chosen.count(m) != 0) out.push_back(m);
  }
  return out;
}

SearchSpace search_space(const CliConfig& cfg) {
  SearchSpace space;
  space.n_trials = cfg.n_trials;
  space.steps = cfg.steps;
  space.validate();
  return space;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  os << content;
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(fmt::format("cannot read {}", path));
  return read_records_csv(is);
}

// Every requested (problem, method, env) cell has a non-diverged record.
bool all_cells_complete(std::span<const RunRecord> records) {
  std::set<std::tuple<std::string, Method, int>> requested;
  std::set<std::tuple<std::string, Method, int>> produced;
  for (const auto& r : records) {
    requested.emplace(r.problem, r.algorithm, r.env);
    if (!r.diverged) produced.emplace(r.problem, r.algorithm, r.env);
  }
  return requested == produced;
}

int cmd_run(const CliConfig& cfg) {
  const auto specs = selected_problems(cfg);
  const auto methods = selected_methods(cfg);
  const auto space = search_space(cfg);
  const RngStream root(cfg.seed);
  std::vector<RunRecord> records;
  for (const auto& spec : specs) {
    fmt::print(stderr, "{}: {} repetitions x {} methods x {} trials\n", spec.id(), cfg.n_repetitions,
               methods.size(), space.n_trials);
    auto recs = run_benchmark(spec, methods, space, cfg.n_repetitions, root.split(problem_label(spec)), cfg.workers);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  fs::create_directories(cfg.out);
  std::ostringstream csv;
  write_records_csv(csv, records);
  write_file(fs::path(cfg.out) / "records.csv", csv.str());
  const auto table = render_table(records);
  write_file(fs::path(cfg.out) / "table.txt", table);
  write_file(fs::path(cfg.out) / "table.csv", render_table_csv(records));
  std::cout << table;
  return all_cells_complete(records) ? 0 : kExitIncomplete;
}

int cmd_sweep(const CliConfig& cfg) {
  const SweepAxis axis = parse_sweep_axis(cfg.axis);
  const auto methods = selected_methods(cfg);
  const auto space = search_space(cfg);
  const RngStream root(cfg.seed);
  std::vector<SweepRow> rows;
  std::vector<RunRecord> all_records;
  std::ostringstream tagged;
  tagged << "axis_value," << kRecordCsvHeader << '\n';
  for (auto spec : selected_problems(cfg)) {
    auto config = SweepConfig::defaults(axis, spec);
    if (!cfg.values.empty()) config.values = cfg.values;
    fmt::print(stderr, "{}: {} sweep over {} values\n", spec.id(), to_string(axis), config.values.size());
    auto result = run_sweep(config, methods, space, cfg.n_repetitions, root.split(problem_label(spec)), cfg.workers);
    rows.insert(rows.end(), result.rows.begin(), result.rows.end());
    for (const auto& [value, rec] : result.records) {
      std::ostringstream one;
      write_records_csv(one, std::span<const RunRecord>(&rec, 1));
      const auto text = one.str();
      tagged << fmt::format("{:.6g},", value) << text.substr(text.find('\n') + 1);
      all_records.push_back(rec);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.problem, a.algorithm, a.axis_value) < std::tie(b.problem, b.algorithm, b.axis_value);
  });
  fs::create_directories(cfg.out);
  const auto sweep_csv = render_sweep_csv(rows);
  write_file(fs::path(cfg.out) / fmt::format("sweep_{}.csv", to_string(axis)), sweep_csv);
  write_file(fs::path(cfg.out) / fmt::format("sweep_{}_records.csv", to_string(axis)), tagged.str());
  std::cout << sweep_csv;
  return all_cells_complete(all_records) ? 0 : kExitIncomplete;
}

int cmd_table(const CliConfig& cfg) {
  const auto records = load_records(cfg.records);
  std::cout << (cfg.csv ? render_table_csv(records) : render_table(records));
  return all_cells_complete(records) ? 0 : kExitIncomplete;
}

int cmd_plot_data(const CliConfig& cfg) {
  const auto records = load_records(cfg.records);
  const auto csv = render_env_average_csv(records);
  if (cfg.out.empty() || cfg.out == "-" || cfg.out == ".") {
    std::cout << csv;
  } else {
    write_file(cfg.out, csv);
  }
  return all_cells_complete(records) ? 0 : kExitIncomplete;
}

int cmd_selftest(const CliConfig& cfg) {
  bool ok = true;
  for (const auto& check : run_selftest(cfg.seed, cfg.cases)) {
    fmt::print("[{}] {}: {:.3g} (threshold {:.3g}){}\n", check.passed ? "PASS" : "FAIL", check.name, check.measured,
               check.threshold, check.detail.empty() ? "" : " " + check.detail);
    ok = ok && check.passed;
  }
  return ok ? 0 : kExitSelftestFailed;
}

int cmd_dump_data(const CliConfig& cfg) {
  const RngStream root(cfg.seed);
  fs::create_directories(cfg.out);
  for (const auto& spec : selected_problems(cfg)) {
    const auto rep = root.split(problem_label(spec)).split(0);
    const auto instance = instantiate_problem(spec, rep.split(0));
    const auto envs = build_environments(instance, false, rep.split(1));
    for (const auto& env : envs) {
      const int e = env.train.env_index;
      write_split_csv(fs::path(cfg.out) / fmt::format("{}_E{}_train.csv", spec.id(), e), env.train);
      write_split_csv(fs::path(cfg.out) / fmt::format("{}_E{}_valid.csv", spec.id(), e), env.valid);
      write_split_csv(fs::path(cfg.out) / fmt::format("{}_E{}_test.csv", spec.id(), e), env.test);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear invariance benchmark: six multi-environment problems, five training methods"};
  app.require_subcommand(1);
  CliConfig cfg;

  auto* run = app.add_subcommand("run", "Random search + model selection over the problem x method grid");
  add_grid_options(run, cfg);

  auto* sweep = app.add_subcommand("sweep", "Env-averaged errors as n_env or d_spu varies");
  add_grid_options(sweep, cfg);
  sweep->add_option("--axis", cfg.axis, "delta_env or delta_spu")->required();
  sweep->add_option("--values", cfg.values, "n_env (delta_env) or d_spu (delta_spu) values");

  auto* table = app.add_subcommand("table", "Render the per-environment table from a records CSV");
  table->add_option("records", cfg.records, "records.csv")->required();
  table->add_flag("--csv", cfg.csv, "Comma-separated output");

  auto* plot = app.add_subcommand("plot-data", "Env-averaged errors per (problem, algorithm) as CSV");
  plot->add_option("records", cfg.records, "records.csv")->required();
  plot->add_option("-o,--out", cfg.out, "Output file (default: stdout)");

  auto* selftest = app.add_subcommand("selftest", "Gradient, rotation, shuffle and determinism checks");
  selftest->add_option("--seed", cfg.seed, "Seed")->capture_default_str();
  selftest->add_option("--cases", cfg.cases, "Random cases per gradient check")->capture_default_str();

  auto* dump = app.add_subcommand("dump-data", "Write one CSV per (problem, env, split) for repetition 0");
  add_grid_options(dump, cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(cfg);
    if (*sweep) return cmd_sweep(cfg);
    if (*table) return cmd_table(cfg);
    if (*plot) return cmd_plot_data(cfg);
    if (*selftest) return cmd_selftest(cfg);
    if (*dump) return cmd_dump_data(cfg);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
