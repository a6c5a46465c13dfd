#include "invbench/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "invbench/algorithms.hpp"
#include "invbench/harness.hpp"
#include "invbench/linalg.hpp"
#include "invbench/models.hpp"
#include "invbench/problems.hpp"
#include "invbench/reporting.hpp"

namespace invbench {
namespace {

constexpr double kFdStep = 1e-6;
constexpr double kGradTolerance = 1e-5;

Split random_split(RngStream& rng, Task task, int n, int d) {
  Split s;
  s.task = task;
  s.x.resize(n, d);
  s.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) s.x(i, k) = rng.normal();
    s.y[i] = task == Task::regression ? rng.normal() : (rng.bernoulli(0.5) ? 1.0 : 0.0);
  }
  return s;
}

LinearModel random_model(RngStream& rng, Task task, int d) {
  LinearModel m = LinearModel::zeros(d, task);
  for (int k = 0; k < d; ++k) m.w[k] = 0.5 * rng.normal();
  m.b = 0.5 * rng.normal();
  return m;
}

double relative_error(const Vec& analytic, const Vec& numeric) {
  const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-8);
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

// Central differences of f over theta.
template <typename F>
Vec numeric_gradient(const Vec& theta, F&& f) {
  Vec out(theta.size());
  Vec probe = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    probe[k] = theta[k] + kFdStep;
    const double up = f(probe);
    probe[k] = theta[k] - kFdStep;
    const double down = f(probe);
    probe[k] = theta[k];
    out[k] = (up - down) / (2.0 * kFdStep);
  }
  return out;
}

// Risk of stacked parameters straight from the data.
double direct_risk(const Vec& theta, const Split& split) {
  return risk_and_grad(LinearModel::from_params(theta, split.task), split).risk;
}

double direct_scale_grad(const Vec& theta, const Split& split) {
  return scale_risk_grad(LinearModel::from_params(theta, split.task), split);
}

CheckResult finish(std::string name, double worst, double threshold, std::string detail = {}) {
  return {std::move(name), worst <= threshold, worst, threshold, std::move(detail)};
}

CheckResult check_risk_gradient(RngStream rng, int n_cases) {
  double worst = 0.0;
  for (int c = 0; c < n_cases; ++c) {
    const Task task = c % 2 == 0 ? Task::regression : Task::classification;
    const int d = 1 + static_cast<int>(rng.below(10));
    const Split split = random_split(rng, task, 20 + static_cast<int>(rng.below(40)), d);
    const LinearModel model = random_model(rng, task, d);
    const auto rg = risk_and_grad(model, split);
    Vec analytic(d + 1);
    analytic.head(d) = rg.grad_w;
    analytic[d] = rg.grad_b;
    const Vec numeric = numeric_gradient(model.params(), [&](const Vec& t) { return direct_risk(t, split); });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return finish("risk gradient vs finite differences", worst, kGradTolerance);
}

CheckResult check_scale_gradient(RngStream rng, int n_cases) {
  double worst = 0.0;
  for (int c = 0; c < n_cases; ++c) {
    const Task task = c % 2 == 0 ? Task::regression : Task::classification;
    const int d = 1 + static_cast<int>(rng.below(10));
    const Split split = random_split(rng, task, 20 + static_cast<int>(rng.below(40)), d);
    const LinearModel model = random_model(rng, task, d);
    const double analytic = scale_risk_grad(model, split);
    // a -> R(a f) scales both weights and bias.
    const Vec theta = model.params();
    const double up = direct_risk(theta * (1.0 + kFdStep), split);
    const double down = direct_risk(theta * (1.0 - kFdStep), split);
    const double numeric = (up - down) / (2.0 * kFdStep);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8));
  }
  return finish("scale gradient vs finite differences", worst, kGradTolerance);
}

CheckResult check_irmv1_gradient(RngStream rng, int n_cases) {
  double worst = 0.0;
  for (int c = 0; c < n_cases; ++c) {
    const Task task = c % 2 == 0 ? Task::regression : Task::classification;
    const int d = 1 + static_cast<int>(rng.below(10));
    std::vector<Split> splits;
    for (int e = 0; e < 3; ++e) splits.push_back(random_split(rng, task, 20 + static_cast<int>(rng.below(40)), d));
    const LinearModel model = random_model(rng, task, d);
    const double lambda = std::pow(10.0, rng.uniform(-1.0, 2.0));
    const Vec analytic = grad_irmv1(model, splits, lambda).grad;
    const Vec numeric = numeric_gradient(model.params(), [&](const Vec& t) {
      double obj = 0.0;
      for (const auto& s : splits) {
        const double scale = direct_scale_grad(t, s);
        obj += direct_risk(t, s) + lambda * scale * scale;
      }
      return obj;
    });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return finish("IRMv1 objective gradient vs finite differences", worst, kGradTolerance);
}

CheckResult check_iga_gradient(RngStream rng, int n_cases) {
  double worst = 0.0;
  for (int c = 0; c < n_cases; ++c) {
    const Task task = c % 2 == 0 ? Task::regression : Task::classification;
    const int d = 1 + static_cast<int>(rng.below(10));
    std::vector<Split> splits;
    for (int e = 0; e < 3; ++e) splits.push_back(random_split(rng, task, 20 + static_cast<int>(rng.below(40)), d));
    const LinearModel model = random_model(rng, task, d);
    const double lambda = std::pow(10.0, rng.uniform(-1.0, 2.0));
    const Vec exact = grad_iga(model, splits, lambda, IgaGradient::hessian_vector).grad;
    const Vec numeric = grad_iga(model, splits, lambda, IgaGradient::finite_difference).grad;
    worst = std::max(worst, relative_error(exact, numeric));
  }
  return finish("IGA penalty gradient: Hessian-vector vs finite differences", worst, kGradTolerance);
}

CheckResult check_moment_path(RngStream rng, int n_cases) {
  double worst = 0.0;
  for (int c = 0; c < n_cases; ++c) {
    const int d = 1 + static_cast<int>(rng.below(10));
    const Split split = random_split(rng, Task::regression, 20 + static_cast<int>(rng.below(40)), d);
    const LinearModel model = random_model(rng, Task::regression, d);
    const auto rg = risk_and_grad(model, split);
    const auto terms = EnvironmentRisk(split).evaluate(model.params(), {.risk = true, .scale_grad = true});
    Vec direct(d + 1);
    direct.head(d) = rg.grad_w;
    direct[d] = rg.grad_b;
    worst = std::max({worst, relative_error(terms.grad, direct),
                      std::abs(terms.risk - rg.risk) / std::max(rg.risk, 1e-8),
                      std::abs(terms.scale_grad - scale_risk_grad(model, split)) /
                          std::max(std::abs(terms.scale_grad), 1e-8)});
  }
  return finish("regression moment path vs direct data path", worst, 1e-9);
}

CheckResult check_rotation(std::uint64_t seed) {
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    RngStream rng = RngStream(seed).split(1000 + static_cast<std::uint64_t>(s));
    for (int d : {1, 2, 5, 10, 20, 32, 64}) worst = std::max(worst, orthogonality_error(sample_rotation(rng, d)));
  }
  return finish("rotation orthogonality max|S^T S - I|", worst, 1e-10);
}

CheckResult check_shuffle(RngStream rng) {
  double mismatches = 0.0;
  for (int c = 0; c < 20; ++c) {
    ProblemSpec spec;
    spec.kind = static_cast<ProblemKind>(c % 3);
    spec.n_per_env = 1 + static_cast<int>(rng.below(300));
    const auto inst = instantiate_problem(spec, rng.split(static_cast<std::uint64_t>(c)));
    const Split before = sample_latent_split(inst, c % spec.n_env, spec.n_per_env, rng.split(100 + c));
    const Split after = shuffle_spurious(before, spec.d_inv, rng.split(200 + c));
    auto rows = [&](const Split& s, int lo, int count) {
      std::vector<std::vector<double>> out;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(count));
        for (int k = 0; k < count; ++k) row[static_cast<std::size_t>(k)] = s.x(i, lo + k);
        out.push_back(std::move(row));
      }
      return out;
    };
    auto spu_before = rows(before, spec.d_inv, spec.d_spu);
    auto spu_after = rows(after, spec.d_inv, spec.d_spu);
    std::sort(spu_before.begin(), spu_before.end());
    std::sort(spu_after.begin(), spu_after.end());
    if (spu_before != spu_after) mismatches += 1.0;
    if (rows(before, 0, spec.d_inv) != rows(after, 0, spec.d_inv) || before.y != after.y) mismatches += 1.0;
  }
  return finish("spurious shuffle preserves multiset and invariant block", mismatches, 0.0);
}

std::string small_run_csv(std::uint64_t seed, int workers) {
  SearchSpace space;
  space.n_trials = 3;
  space.steps = 50;
  std::vector<RunRecord> records;
  const RngStream root(seed);
  std::uint64_t label = 0;
  for (auto spec : all_problems()) {
    spec.n_per_env = 200;
    auto recs = run_benchmark(spec, kAllMethods, space, 2, root.split(label++), workers);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  std::ostringstream os;
  write_records_csv(os, records);
  os << render_table(records);
  return os.str();
}

CheckResult check_determinism(std::uint64_t seed) {
  const auto serial = small_run_csv(seed, 1);
  const auto again = small_run_csv(seed, 1);
  const auto threaded = small_run_csv(seed, 3);
  const double differing = (serial != again ? 1.0 : 0.0) + (serial != threaded ? 1.0 : 0.0);
  return finish("end-to-end determinism (repeat and 3 workers)", differing, 0.0,
                fmt::format("{} bytes", serial.size()));
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed, int n_cases) {
  const RngStream root(seed);
  std::vector<CheckResult> out;
  out.push_back(check_risk_gradient(root.split(1), n_cases));
  out.push_back(check_scale_gradient(root.split(2), n_cases));
  out.push_back(check_irmv1_gradient(root.split(3), n_cases));
  out.push_back(check_iga_gradient(root.split(4), n_cases));
  out.push_back(check_moment_path(root.split(5), n_cases));
  out.push_back(check_rotation(seed));
  out.push_back(check_shuffle(root.split(6)));
  out.push_back(check_determinism(seed));
  return out;
}

}  // namespace invbench
