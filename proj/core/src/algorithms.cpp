#include "invbench/algorithms.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {
namespace {

void check_envs(std::span<const EnvironmentRisk> envs) {
  if (envs.empty()) throw ConfigError("at least one training environment is required");
  for (const auto& env : envs) {
    if (env.task() != envs.front().task() || env.dim() != envs.front().dim()) {
      throw ConfigError("training environments disagree on task or dimension");
    }
  }
}

std::vector<EnvironmentRisk> risks_of(std::span<const Split> splits) {
  std::vector<EnvironmentRisk> out;
  out.reserve(splits.size());
  for (const auto& s : splits) out.emplace_back(s);
  return out;
}

Task task_of(std::span<const EnvironmentRisk> envs) { return envs.front().task(); }

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ERM: return "ERM";
    case Method::IRMv1: return "IRMv1";
    case Method::IGA: return "IGA";
    case Method::ANDMask: return "ANDMask";
    case Method::Oracle: return "Oracle";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const auto wanted = lower(name);
  for (Method m : kAllMethods) {
    if (lower(to_string(m)) == wanted) return m;
  }
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

void HParams::validate() const {
  if (!(lr > 0.0)) throw ConfigError(fmt::format("lr must be positive, got {}", lr));
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError(fmt::format("tau must lie in [0, 1], got {}", tau));
  if (steps < 0) throw ConfigError("steps must be non-negative");
}

ObjectiveGrad erm_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, bool with_objective) {
  check_envs(envs);
  double total_n = 0.0;
  for (const auto& env : envs) total_n += static_cast<double>(env.size());
  ObjectiveGrad out{0.0, Vec::Zero(theta.size())};
  for (const auto& env : envs) {
    const double weight = static_cast<double>(env.size()) / total_n;
    const auto terms = env.evaluate(theta, {.risk = with_objective});
    out.objective += weight * terms.risk;
    out.grad += weight * terms.grad;
  }
  return out;
}

ObjectiveGrad irmv1_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double lambda,
                              bool with_objective) {
  check_envs(envs);
  ObjectiveGrad out{0.0, Vec::Zero(theta.size())};
  for (const auto& env : envs) {
    const auto terms = env.evaluate(theta, {.risk = with_objective, .scale_grad = true});
    out.objective += terms.risk + lambda * terms.scale_grad * terms.scale_grad;
    out.grad += terms.grad + (2.0 * lambda * terms.scale_grad) * terms.scale_grad_grad;
  }
  return out;
}

double iga_penalty(const Vec& theta, std::span<const EnvironmentRisk> envs) {
  check_envs(envs);
  std::vector<Vec> grads;
  grads.reserve(envs.size());
  Vec mean = Vec::Zero(theta.size());
  for (const auto& env : envs) {
    grads.push_back(env.evaluate(theta, {.risk = false}).grad);
    mean += grads.back();
  }
  mean /= static_cast<double>(envs.size());
  double penalty = 0.0;
  for (const auto& g : grads) penalty += (g - mean).squaredNorm();
  return penalty;
}

ObjectiveGrad iga_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double lambda,
                            IgaGradient mode, bool with_objective) {
  check_envs(envs);
  std::vector<Vec> grads;
  grads.reserve(envs.size());
  ObjectiveGrad out{0.0, Vec::Zero(theta.size())};
  Vec mean = Vec::Zero(theta.size());
  for (const auto& env : envs) {
    auto terms = env.evaluate(theta, {.risk = with_objective});
    out.objective += terms.risk;
    out.grad += terms.grad;
    mean += terms.grad;
    grads.push_back(std::move(terms.grad));
  }
  mean /= static_cast<double>(envs.size());
  double penalty = 0.0;
  for (const auto& g : grads) penalty += (g - mean).squaredNorm();
  out.objective += lambda * penalty;
  if (lambda == 0.0) return out;

  if (mode == IgaGradient::hessian_vector) {
    // The mean-gradient term drops out because the deviations sum to zero.
    for (std::size_t e = 0; e < envs.size(); ++e) {
      out.grad += (2.0 * lambda) * envs[e].hessian_vector(theta, grads[e] - mean);
    }
    return out;
  }
  Vec probe = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
    probe[k] = theta[k] + h;
    const double up = iga_penalty(probe, envs);
    probe[k] = theta[k] - h;
    const double down = iga_penalty(probe, envs);
    probe[k] = theta[k];
    out.grad[k] += lambda * (up - down) / (2.0 * h);
  }
  return out;
}

Vec and_mask(std::span<const Vec> env_grads, double tau) {
  if (env_grads.empty()) throw ConfigError("and_mask: no environment gradients");
  const Eigen::Index p = env_grads.front().size();
  const auto n_env = static_cast<double>(env_grads.size());
  Vec mean = Vec::Zero(p);
  Vec sign_sum = Vec::Zero(p);
  for (const auto& g : env_grads) {
    mean += g;
    sign_sum += g.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
  }
  mean /= n_env;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (std::abs(sign_sum[k]) / n_env < tau) mean[k] = 0.0;
  }
  return mean;
}

ObjectiveGrad andmask_objective(const Vec& theta, std::span<const EnvironmentRisk> envs, double tau,
                                bool with_objective) {
  check_envs(envs);
  std::vector<Vec> grads;
  grads.reserve(envs.size());
  double risk = 0.0;
  for (const auto& env : envs) {
    auto terms = env.evaluate(theta, {.risk = with_objective});
    risk += terms.risk;
    grads.push_back(std::move(terms.grad));
  }
  return {risk / static_cast<double>(envs.size()), and_mask(grads, tau)};
}

ObjectiveGrad grad_erm(const LinearModel& model, std::span<const Split> train_splits) {
  const auto envs = risks_of(train_splits);
  return erm_objective(model.params(), envs);
}

ObjectiveGrad grad_irmv1(const LinearModel& model, std::span<const Split> train_splits, double lambda) {
  const auto envs = risks_of(train_splits);
  return irmv1_objective(model.params(), envs, lambda);
}

ObjectiveGrad grad_iga(const LinearModel& model, std::span<const Split> train_splits, double lambda,
                       IgaGradient mode) {
  const auto envs = risks_of(train_splits);
  return iga_objective(model.params(), envs, lambda, mode);
}

Vec grad_andmask(const LinearModel& model, std::span<const Split> train_splits, double tau) {
  const auto envs = risks_of(train_splits);
  return andmask_objective(model.params(), envs, tau).grad;
}

std::vector<EnvironmentRisk> make_train_risks(std::span<const EnvironmentData> env_data) {
  std::vector<EnvironmentRisk> out;
  out.reserve(env_data.size());
  for (const auto& data : env_data) out.emplace_back(data.train);
  return out;
}

TrainOutput train(std::span<const EnvironmentRisk> envs, const HParams& hparams) {
  hparams.validate();
  check_envs(envs);
  const Task task = task_of(envs);
  Vec theta = Vec::Zero(envs.front().dim() + 1);
  AdamState adam = AdamState::init(theta.size(), hparams.lr, hparams.weight_decay);

  TrainOutput out;
  for (int step = 0; step < hparams.steps; ++step) {
    Vec grad;
    switch (hparams.method) {
      case Method::ERM:
      case Method::Oracle:
        grad = erm_objective(theta, envs, false).grad;
        break;
      case Method::IRMv1:
        grad = irmv1_objective(theta, envs, hparams.lambda, false).grad;
        break;
      case Method::IGA:
        grad = iga_objective(theta, envs, hparams.lambda, IgaGradient::hessian_vector, false).grad;
        break;
      case Method::ANDMask:
        grad = andmask_objective(theta, envs, hparams.tau, false).grad;
        break;
    }
    if (!grad.allFinite() || !theta.allFinite()) {
      out.diverged = true;
      out.diagnostics = fmt::format("non-finite gradient at step {} (lr={:.3g}, lambda={:.3g})", step,
                                    hparams.lr, hparams.lambda);
      break;
    }
    adam_update(adam, theta, grad);
  }
  out.model = LinearModel::from_params(theta, task);
  if (!out.diverged) {
    out.final_train_risk = erm_objective(theta, envs).objective;
    if (!std::isfinite(out.final_train_risk) || !theta.allFinite()) {
      out.diverged = true;
      out.diagnostics = "non-finite final parameters or risk";
    }
  }
  return out;
}

TrainOutput train(std::span<const EnvironmentData> env_data, const HParams& hparams) {
  const auto envs = make_train_risks(env_data);
  return train(envs, hparams);
}

}  // namespace invbench
