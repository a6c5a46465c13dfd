#pragma once

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invbench/algorithms.hpp"
#include "invbench/problems.hpp"
#include "invbench/rng.hpp"

namespace invbench {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Random-search distributions. Ranges prefixed log10_ are sampled uniformly
/// in the exponent.
struct SearchSpace {
  Range log10_lr{-4.0, -2.0};
  Range log10_weight_decay{-6.0, -2.0};
  Range log10_lambda{-1.0, 4.0};
  Range tau{0.5, 1.0};
  int n_trials = 20;
  int steps = 10000;

  void validate() const;
};

/// Fields a method does not use are left at zero.
HParams sample_hparams(Method method, const SearchSpace& space, RngStream stream);

struct RunRecord {
  std::string problem;  ///< ProblemSpec::id()
  Method algorithm = Method::ERM;
  int env = 0;
  int repetition = 0;
  double test_error = 0.0;
  double valid_error = 0.0;
  HParams hparams;
  bool diverged = false;
};

struct TrialResult {
  HParams hparams;
  bool diverged = false;
  double valid_error = 0.0;  ///< pooled over every environment's validation split
};

/// Index of the non-diverged trial with the smallest validation error; the
/// earliest trial wins ties. nullopt when every trial diverged.
std::optional<std::size_t> select_trial(std::span<const TrialResult> trials);

/// Validation (or any split family) error pooled over environments.
double pooled_error(const LinearModel& model, std::span<const EnvironmentData> envs,
                    Split EnvironmentData::*which);

/// Runs `count` independent tasks on up to `workers` threads. Tasks must
/// write only to their own output slot.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task);

/// Worker count from INVBENCH_WORKERS, falling back to 1.
int default_workers();

/// One full resample: instance, environments, random search and model
/// selection for every method. One record per (method, environment).
std::vector<RunRecord> run_repetition(const ProblemSpec& spec, std::span<const Method> methods,
                                      const SearchSpace& space, int repetition, RngStream repetition_stream,
                                      int workers = 1);

/// Repetition r draws from master_stream.split(r).
std::vector<RunRecord> run_benchmark(const ProblemSpec& spec, std::span<const Method> methods,
                                     const SearchSpace& space, int n_repetitions, RngStream master_stream,
                                     int workers = 1);

struct Summary {
  double mean = 0.0;
  double spread = 0.0;  ///< sample standard deviation, 0 for a single value
  int n = 0;
};

Summary summarize(std::span<const double> values);

struct CellKey {
  std::string problem;
  std::string algorithm;
  int env = 0;
  auto operator<=>(const CellKey&) const = default;
};

struct AverageKey {
  std::string problem;
  std::string algorithm;
  auto operator<=>(const AverageKey&) const = default;
};

/// Per-(problem, algorithm, env) summaries over repetitions. Diverged
/// records are skipped; cells left empty are omitted with a warning.
std::map<CellKey, Summary> aggregate(std::span<const RunRecord> records);

/// Averages each repetition's errors across environments first, then
/// summarizes across repetitions.
std::map<AverageKey, Summary> aggregate_env_average(std::span<const RunRecord> records);

enum class SweepAxis { delta_env, delta_spu };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepConfig {
  SweepAxis axis = SweepAxis::delta_env;
  /// n_env values for delta_env, d_spu values for delta_spu.
  std::vector<int> values;
  /// Problem kind and the dimensions held fixed.
  ProblemSpec base;

  /// delta_env: (d_inv, d_spu) = (5, 5), n_env in 2..10.
  /// delta_spu: (d_inv, n_env) = (5, 3), d_spu in {0, 1, 2, 3, 4, 5, 7, 10}.
  static SweepConfig defaults(SweepAxis axis, ProblemSpec base);

  ProblemSpec spec_for(int value) const;
  double axis_value(int value) const;
  void validate() const;
};

struct SweepRow {
  double axis_value = 0.0;
  std::string problem;
  std::string algorithm;
  Summary summary;
};

struct SweepResult {
  std::vector<std::pair<double, RunRecord>> records;  ///< tagged with axis value
  std::vector<SweepRow> rows;  ///< sorted by (problem, algorithm, axis_value)
};

/// Value v draws from master_stream.split(v).
SweepResult run_sweep(const SweepConfig& config, std::span<const Method> methods, const SearchSpace& space,
                      int n_repetitions, RngStream master_stream, int workers = 1);

}  // namespace invbench
