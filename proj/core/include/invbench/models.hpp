#pragma once

#include "invbench/linalg.hpp"
#include "invbench/problems.hpp"

namespace invbench {

/// Affine predictor z = w.x + b. For classification z is a logit.
struct LinearModel {
  Vec w;
  double b = 0.0;
  Task task = Task::regression;

  static LinearModel zeros(Eigen::Index dim, Task task);

  /// Stacked parameters (w, b), bias last.
  Vec params() const;
  static LinearModel from_params(const Vec& theta, Task task);
};

Vec predict(const LinearModel& model, const Mat& x);

struct RiskGrad {
  double risk = 0.0;
  Vec grad_w;
  double grad_b = 0.0;
};

/// Mean squared error (regression) or mean logistic loss softplus(z) - y z
/// (classification) and its exact gradient, computed directly from the data.
RiskGrad risk_and_grad(const LinearModel& model, const Split& split);

/// Derivative of the risk with respect to a scalar multiplier on the model
/// output, evaluated at 1: d/da R(a * f) at a = 1.
double scale_risk_grad(const LinearModel& model, const Split& split);

/// Fraction of rows where (z > 0) disagrees with (y == 1). z == 0 predicts 0.
double zero_one_error(const LinearModel& model, const Split& split);
double mse_error(const LinearModel& model, const Split& split);
/// MSE for regression splits, 0-1 error for classification splits.
double evaluation_error(const LinearModel& model, const Split& split);

/// Numerically stable log(1 + exp(z)).
double softplus(double z);
double sigmoid(double z);

/// Everything a training step needs from one environment, as functions of
/// the stacked parameters theta = (w, b).
struct RiskTerms {
  double risk = 0.0;       ///< NaN unless requested
  Vec grad;                ///< dR/dtheta
  double scale_grad = 0.0; ///< D = d/da R(a f)|_{a=1}
  Vec scale_grad_grad;     ///< dD/dtheta (only filled when requested)
};

struct EvalOptions {
  bool risk = true;
  bool scale_grad = false;
};

/// Per-environment risk evaluator used by the training loop.
///
/// Regression risks are quadratic in theta, so they are evaluated from the
/// second moments of [x, 1, y] in O(d^2) per call. Classification risks keep
/// a reference to the split and make one pass over it per call, so the
/// split must outlive the evaluator.
class EnvironmentRisk {
 public:
  explicit EnvironmentRisk(const Split& split);

  RiskTerms evaluate(const Vec& theta, EvalOptions options = {}) const;
  /// Hessian of the risk at theta applied to v.
  Vec hessian_vector(const Vec& theta, const Vec& v) const;

  Task task() const { return task_; }
  Eigen::Index size() const { return n_; }
  Eigen::Index dim() const { return dim_; }

 private:
  static constexpr int kBlockRows = 256;
  RiskTerms evaluate_logistic(const Vec& theta, EvalOptions options) const;

  Task task_;
  Eigen::Index n_;
  Eigen::Index dim_;
  // Regression: moments of the augmented design [x, 1].
  Mat second_moment_;  ///< (1/n) X~^T X~
  Vec cross_moment_;   ///< (1/n) X~^T y
  double y_moment_ = 0.0;
  // Classification.
  const Split* split_ = nullptr;
};

/// Full-batch Adam over stacked parameters (w, b).
///
/// Weight decay is decoupled: each step additionally subtracts
/// lr * weight_decay * w from the weights; the bias is never decayed.
struct AdamState {
  Vec m;
  Vec v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static AdamState init(Eigen::Index n_params, double lr, double weight_decay);
};

/// In-place update on stacked parameters. Throws std::domain_error on a
/// non-finite gradient.
void adam_update(AdamState& state, Vec& theta, const Vec& grad);

struct AdamResult {
  LinearModel model;
  AdamState state;
};
AdamResult adam_step(AdamState state, LinearModel model, const Vec& grad_w, double grad_b);

}  // namespace invbench
