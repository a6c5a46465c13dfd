#include "invbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {
namespace {

// Children of a repetition stream.
constexpr std::uint64_t kInstanceLabel = 0;
constexpr std::uint64_t kEnvironmentsLabel = 1;
constexpr std::uint64_t kMethodLabelBase = 2;
// Children of a trial stream.
constexpr std::uint64_t kHparamsLabel = 0;

std::uint64_t method_label(Method m) { return kMethodLabelBase + static_cast<std::uint64_t>(m); }

double log_uniform(RngStream& rng, Range exponent) { return std::pow(10.0, rng.uniform(exponent.lo, exponent.hi)); }

}  // namespace

void SearchSpace::validate() const {
  for (const Range& r : {log10_lr, log10_weight_decay, log10_lambda, tau}) {
    if (!(r.lo <= r.hi)) throw ConfigError(fmt::format("empty search range [{}, {}]", r.lo, r.hi));
  }
  if (tau.lo < 0.0 || tau.hi > 1.0) throw ConfigError("tau range must lie within [0, 1]");
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
}

HParams sample_hparams(Method method, const SearchSpace& space, RngStream stream) {
  HParams hp;
  hp.method = method;
  hp.steps = space.steps;
  hp.lr = log_uniform(stream, space.log10_lr);
  hp.weight_decay = log_uniform(stream, space.log10_weight_decay);
  switch (method) {
    case Method::IRMv1:
    case Method::IGA:
      hp.lambda = log_uniform(stream, space.log10_lambda);
      break;
    case Method::ANDMask:
      hp.tau = stream.uniform(space.tau.lo, space.tau.hi);
      break;
    case Method::ERM:
    case Method::Oracle:
      break;
  }
  return hp;
}

std::optional<std::size_t> select_trial(std::span<const TrialResult> trials) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].diverged || !std::isfinite(trials[i].valid_error)) continue;
    if (!best || trials[i].valid_error < trials[*best].valid_error) best = i;
  }
  return best;
}

double pooled_error(const LinearModel& model, std::span<const EnvironmentData> envs,
                    Split EnvironmentData::*which) {
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& env : envs) {
    const Split& split = env.*which;
    const auto n = static_cast<double>(split.size());
    weighted += n * evaluation_error(model, split);
    total += n;
  }
  return weighted / total;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task) {
  const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
  if (n_threads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(n_threads, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

int default_workers() {
  if (const char* env = std::getenv("INVBENCH_WORKERS")) {
    const int value = std::atoi(env);
    if (value > 0) return value;
  }
  return 1;
}

std::vector<RunRecord> run_repetition(const ProblemSpec& spec, std::span<const Method> methods,
                                      const SearchSpace& space, int repetition, RngStream repetition_stream,
                                      int workers) {
  spec.validate();
  space.validate();
  const auto instance = instantiate_problem(spec, repetition_stream.split(kInstanceLabel));
  const auto env_stream = repetition_stream.split(kEnvironmentsLabel);
  const bool needs_plain =
      std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::Oracle; });
  const bool needs_oracle =
      std::any_of(methods.begin(), methods.end(), [](Method m) { return m == Method::Oracle; });
  std::vector<EnvironmentData> plain_envs;
  std::vector<EnvironmentData> oracle_envs;
  if (needs_plain) plain_envs = build_environments(instance, false, env_stream);
  if (needs_oracle) oracle_envs = build_environments(instance, true, env_stream);
  const auto plain_risks = make_train_risks(plain_envs);
  const auto oracle_risks = make_train_risks(oracle_envs);

  const auto n_trials = static_cast<std::size_t>(space.n_trials);
  struct Slot {
    TrialResult result;
    LinearModel model;
  };
  std::vector<Slot> slots(methods.size() * n_trials);
  parallel_for(slots.size(), workers, [&](std::size_t index) {
    const Method method = methods[index / n_trials];
    const std::size_t trial = index % n_trials;
    const auto trial_stream = repetition_stream.split(method_label(method)).split(trial);
    const HParams hp = sample_hparams(method, space, trial_stream.split(kHparamsLabel));
    const bool oracle = method == Method::Oracle;
    const auto& envs = oracle ? oracle_envs : plain_envs;
    auto trained = train(oracle ? std::span<const EnvironmentRisk>(oracle_risks)
                                : std::span<const EnvironmentRisk>(plain_risks),
                         hp);
    Slot& slot = slots[index];
    slot.result.hparams = hp;
    slot.result.diverged = trained.diverged;
    slot.result.valid_error = trained.diverged ? std::numeric_limits<double>::quiet_NaN()
                                               : pooled_error(trained.model, envs, &EnvironmentData::valid);
    slot.model = std::move(trained.model);
  });

  std::vector<RunRecord> records;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const Method method = methods[mi];
    const auto& envs = method == Method::Oracle ? oracle_envs : plain_envs;
    std::vector<TrialResult> trials;
    trials.reserve(n_trials);
    for (std::size_t t = 0; t < n_trials; ++t) trials.push_back(slots[mi * n_trials + t].result);
    const auto chosen = select_trial(trials);
    for (int e = 0; e < spec.n_env; ++e) {
      RunRecord rec;
      rec.problem = spec.id();
      rec.algorithm = method;
      rec.env = e;
      rec.repetition = repetition;
      if (!chosen) {
        rec.diverged = true;
        rec.hparams = trials.front().hparams;
        rec.test_error = std::numeric_limits<double>::quiet_NaN();
        rec.valid_error = std::numeric_limits<double>::quiet_NaN();
      } else {
        const Slot& slot = slots[mi * n_trials + *chosen];
        const auto& env = envs[static_cast<std::size_t>(e)];
        rec.hparams = slot.result.hparams;
        rec.test_error = evaluation_error(slot.model, env.test);
        rec.valid_error = evaluation_error(slot.model, env.valid);
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<RunRecord> run_benchmark(const ProblemSpec& spec, std::span<const Method> methods,
                                     const SearchSpace& space, int n_repetitions, RngStream master_stream,
                                     int workers) {
  if (n_repetitions < 1) throw ConfigError("n_repetitions must be >= 1");
  std::vector<RunRecord> records;
  for (int r = 0; r < n_repetitions; ++r) {
    auto rep = run_repetition(spec, methods, space, r, master_stream.split(static_cast<std::uint64_t>(r)), workers);
    records.insert(records.end(), std::make_move_iterator(rep.begin()), std::make_move_iterator(rep.end()));
  }
  return records;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.spread = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::map<CellKey, Summary> aggregate(std::span<const RunRecord> records) {
  std::map<CellKey, std::vector<double>> groups;
  std::set<CellKey> seen;
  for (const auto& rec : records) {
    CellKey key{rec.problem, std::string(to_string(rec.algorithm)), rec.env};
    seen.insert(key);
    if (!rec.diverged) groups[key].push_back(rec.test_error);
  }
  std::map<CellKey, Summary> out;
  for (const auto& key : seen) {
    auto it = groups.find(key);
    if (it == groups.end()) {
      fmt::print(stderr, "warning: {}/{}/E{} has no non-diverged records; omitted\n", key.problem,
                 key.algorithm, key.env);
      continue;
    }
    out.emplace(key, summarize(it->second));
  }
  return out;
}

std::map<AverageKey, Summary> aggregate_env_average(std::span<const RunRecord> records) {
  struct Acc {
    double sum = 0.0;
    int count = 0;
  };
  std::map<std::tuple<std::string, std::string, int>, Acc> per_rep;
  std::set<AverageKey> seen;
  for (const auto& rec : records) {
    const std::string alg(to_string(rec.algorithm));
    seen.insert({rec.problem, alg});
    if (rec.diverged) continue;
    auto& acc = per_rep[{rec.problem, alg, rec.repetition}];
    acc.sum += rec.test_error;
    acc.count += 1;
  }
  std::map<AverageKey, std::vector<double>> groups;
  for (const auto& [key, acc] : per_rep) {
    groups[{std::get<0>(key), std::get<1>(key)}].push_back(acc.sum / acc.count);
  }
  std::map<AverageKey, Summary> out;
  for (const auto& key : seen) {
    auto it = groups.find(key);
    if (it == groups.end()) {
      fmt::print(stderr, "warning: {}/{} has no non-diverged records; omitted\n", key.problem, key.algorithm);
      continue;
    }
    out.emplace(key, summarize(it->second));
  }
  return out;
}

std::string_view to_string(SweepAxis axis) { return axis == SweepAxis::delta_env ? "delta_env" : "delta_spu"; }

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "delta_env") return SweepAxis::delta_env;
  if (name == "delta_spu") return SweepAxis::delta_spu;
  throw ConfigError(fmt::format("unknown sweep axis '{}' (expected delta_env or delta_spu)", name));
}

SweepConfig SweepConfig::defaults(SweepAxis axis, ProblemSpec base) {
  SweepConfig cfg;
  cfg.axis = axis;
  base.d_inv = 5;
  if (axis == SweepAxis::delta_env) {
    base.d_spu = 5;
    cfg.values = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  } else {
    base.n_env = 3;
    cfg.values = {0, 1, 2, 3, 4, 5, 7, 10};
  }
  cfg.base = base;
  return cfg;
}

ProblemSpec SweepConfig::spec_for(int value) const {
  ProblemSpec spec = base;
  if (axis == SweepAxis::delta_env) {
    spec.n_env = value;
  } else {
    spec.d_spu = value;
  }
  return spec;
}

double SweepConfig::axis_value(int value) const {
  if (axis == SweepAxis::delta_env) return static_cast<double>(value) / base.d_spu;
  return static_cast<double>(value) / base.d_inv;
}

void SweepConfig::validate() const {
  if (values.empty()) throw ConfigError("sweep has no values");
  if (axis == SweepAxis::delta_env && base.d_spu < 1) {
    throw ConfigError("delta_env sweep needs d_spu >= 1");
  }
  for (int v : values) spec_for(v).validate();
}

SweepResult run_sweep(const SweepConfig& config, std::span<const Method> methods, const SearchSpace& space,
                      int n_repetitions, RngStream master_stream, int workers) {
  config.validate();
  SweepResult result;
  for (int value : config.values) {
    const double axis_value = config.axis_value(value);
    const auto records = run_benchmark(config.spec_for(value), methods, space, n_repetitions,
                                       master_stream.split(static_cast<std::uint64_t>(value)), workers);
    for (const auto& [key, summary] : aggregate_env_average(records)) {
      result.rows.push_back({axis_value, key.problem, key.algorithm, summary});
    }
    for (const auto& rec : records) result.records.emplace_back(axis_value, rec);
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.problem, a.algorithm, a.axis_value) < std::tie(b.problem, b.algorithm, b.axis_value);
  });
  return result;
}

}  // namespace invbench
