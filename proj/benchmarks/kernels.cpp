#include <benchmark/benchmark.h>

#include "invbench/algorithms.hpp"
#include "invbench/harness.hpp"

using namespace invbench;

namespace {

std::vector<EnvironmentData> environments(const char* problem, int n) {
  auto spec = ProblemSpec::parse(problem);
  spec.n_per_env = n;
  const auto inst = instantiate_problem(spec, RngStream(1));
  return build_environments(inst, false, RngStream(2));
}

Vec some_theta(Eigen::Index size) {
  RngStream rng(3);
  Vec theta(size);
  for (Eigen::Index k = 0; k < size; ++k) theta[k] = 0.3 * rng.normal();
  return theta;
}

void BM_Sampling(benchmark::State& state) {
  auto spec = ProblemSpec::parse("example2s");
  spec.n_per_env = static_cast<int>(state.range(0));
  const auto inst = instantiate_problem(spec, RngStream(1));
  for (auto _ : state) benchmark::DoNotOptimize(build_environments(inst, false, RngStream(2)));
  state.SetItemsProcessed(state.iterations() * 9 * state.range(0));
}
BENCHMARK(BM_Sampling)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_LogisticEvaluate(benchmark::State& state) {
  const auto envs = environments("example3", static_cast<int>(state.range(0)));
  const EnvironmentRisk risk(envs[0].train);
  const Vec theta = some_theta(risk.dim() + 1);
  const EvalOptions options{.risk = false, .scale_grad = state.range(1) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(risk.evaluate(theta, options));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogisticEvaluate)->Args({10000, 0})->Args({10000, 1})->Unit(benchmark::kMicrosecond);

void BM_LogisticHessianVector(benchmark::State& state) {
  const auto envs = environments("example3", 10000);
  const EnvironmentRisk risk(envs[0].train);
  const Vec theta = some_theta(risk.dim() + 1);
  const Vec v = some_theta(risk.dim() + 1).reverse();
  for (auto _ : state) benchmark::DoNotOptimize(risk.hessian_vector(theta, v));
}
BENCHMARK(BM_LogisticHessianVector)->Unit(benchmark::kMicrosecond);

void BM_RegressionEvaluate(benchmark::State& state) {
  const auto envs = environments("example1", 10000);
  const EnvironmentRisk risk(envs[0].train);
  const Vec theta = some_theta(risk.dim() + 1);
  for (auto _ : state) benchmark::DoNotOptimize(risk.evaluate(theta, {.risk = true, .scale_grad = true}));
}
BENCHMARK(BM_RegressionEvaluate)->Unit(benchmark::kNanosecond);

// One full-batch step per method on the default three environments.
void BM_MethodStep(benchmark::State& state) {
  const auto method = static_cast<Method>(state.range(0));
  const auto envs = environments("example2", 10000);
  const auto risks = make_train_risks(envs);
  const Vec theta = some_theta(risks.front().dim() + 1);
  for (auto _ : state) {
    switch (method) {
      case Method::IRMv1: benchmark::DoNotOptimize(irmv1_objective(theta, risks, 10.0, false)); break;
      case Method::IGA: benchmark::DoNotOptimize(iga_objective(theta, risks, 10.0, IgaGradient::hessian_vector, false)); break;
      case Method::ANDMask: benchmark::DoNotOptimize(andmask_objective(theta, risks, 0.7, false)); break;
      default: benchmark::DoNotOptimize(erm_objective(theta, risks, false)); break;
    }
  }
  state.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_MethodStep)
    ->Arg(static_cast<int>(Method::ERM))
    ->Arg(static_cast<int>(Method::IRMv1))
    ->Arg(static_cast<int>(Method::IGA))
    ->Arg(static_cast<int>(Method::ANDMask))
    ->Unit(benchmark::kMicrosecond);

void BM_IgaFiniteDifference(benchmark::State& state) {
  const auto envs = environments("example2", 10000);
  const auto risks = make_train_risks(envs);
  const Vec theta = some_theta(risks.front().dim() + 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iga_objective(theta, risks, 10.0, IgaGradient::finite_difference, false));
  }
}
BENCHMARK(BM_IgaFiniteDifference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
