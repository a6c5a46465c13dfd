#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invbench/models.hpp"
#include "invbench/problems.hpp"

namespace invbench {

enum class Method { ERM, IRMv1, IGA, ANDMask, Oracle };

inline constexpr std::array<Method, 5> kAllMethods = {Method::ANDMask, Method::ERM, Method::IGA,
                                                      Method::IRMv1, Method::Oracle};

std::string_view to_string(Method method);
/// Case-insensitive; throws ConfigError for unknown names.
Method parse_method(std::string_view name);

struct HParams {
  Method method = Method::ERM;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double lambda = 0.0;  ///< IRMv1 / IGA penalty weight
  double tau = 0.0;     ///< ANDMask agreement threshold
  int steps = 10000;

  void validate() const;
};

/// Objective value and its gradient with respect to theta = (w, b).
struct ObjectiveGrad {
  double objective = 0.0;
  Vec grad;
};

/// How the IGA variance-penalty gradient is obtained.
enum class IgaGradient {
  hessian_vector,     ///< 2 sum_e H_e (g_e - mean g), exact
  finite_difference,  ///< central differences of the penalty over theta
};

// Method gradients over prepared per-environment evaluators. With
// with_objective == false the objective is left NaN and the (costlier)
// risk values are skipped.
ObjectiveGrad erm_objective(const Vec& theta, std::span<const EnvironmentRisk> envs,
                            bool with_objective = true);
ObjectiveGrad irmv1_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double lambda,
                              bool with_objective = true);
ObjectiveGrad iga_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double lambda,
                            IgaGradient mode = IgaGradient::hessian_vector, bool with_objective = true);
/// sum_e ||g_e - mean g||^2
double iga_penalty(const Vec& theta, std::span<const EnvironmentRisk> envs);
ObjectiveGrad andmask_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double tau,
                                bool with_objective = true);

/// Mean of per-environment gradients, restricted to the coordinates whose
/// gradient signs agree at rate >= tau; other coordinates are zero.
Vec and_mask(std::span<const Vec> env_grads, double tau);

// The same assemblies over raw splits.
ObjectiveGrad grad_erm(const LinearModel& model, std::span<const Split> train_splits);
ObjectiveGrad grad_irmv1(const LinearModel& model, std::span<const Split> train_splits, double lambda);
ObjectiveGrad grad_iga(const LinearModel& model, std::span<const Split> train_splits, double lambda,
                       IgaGradient mode = IgaGradient::hessian_vector);
Vec grad_andmask(const LinearModel& model, std::span<const Split> train_splits, double tau);

struct TrainOutput {
  LinearModel model;
  double final_train_risk = 0.0;
  bool diverged = false;
  std::string diagnostics;
};

/// Full-batch Adam from a zero initialization for hparams.steps steps.
/// Oracle training is ERM; the oracle data must be built upstream.
/// Divergence is reported through TrainOutput::diverged, never thrown.
TrainOutput train(std::span<const EnvironmentRisk> envs, const HParams& hparams);
TrainOutput train(std::span<const EnvironmentData> env_data, const HParams& hparams);

/// Evaluators over the train splits; they reference `env_data`.
std::vector<EnvironmentRisk> make_train_risks(std::span<const EnvironmentData> env_data);

}  // namespace invbench
