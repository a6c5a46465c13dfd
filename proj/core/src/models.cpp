#include "invbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {
namespace {

void check_compatible(const LinearModel& model, const Split& split) {
  if (split.size() == 0) throw ConfigError("empty split");
  if (model.w.size() != split.dim()) {
    throw ConfigError(fmt::format("model has {} weights, data has {} columns", model.w.size(), split.dim()));
  }
  if (model.task != split.task) {
    throw ConfigError(fmt::format("model task {} does not match split task {}", to_string(model.task),
                                  to_string(split.task)));
  }
}

Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& z) { return (1.0 + (-z).exp()).inverse(); }

Eigen::ArrayXd softplus_array(const Eigen::ArrayXd& z) {
  return z.max(0.0) + (-z.abs()).exp().log1p();
}

}  // namespace

LinearModel LinearModel::zeros(Eigen::Index dim, Task task) { return {Vec::Zero(dim), 0.0, task}; }

Vec LinearModel::params() const {
  Vec theta(w.size() + 1);
  theta.head(w.size()) = w;
  theta[w.size()] = b;
  return theta;
}

LinearModel LinearModel::from_params(const Vec& theta, Task task) {
  const Eigen::Index d = theta.size() - 1;
  return {theta.head(d), theta[d], task};
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vec predict(const LinearModel& model, const Mat& x) {
  if (x.cols() != model.w.size()) {
    throw ConfigError(fmt::format("predict: model has {} weights, data has {} columns", model.w.size(), x.cols()));
  }
  Vec z = x * model.w;
  z.array() += model.b;
  return z;
}

RiskGrad risk_and_grad(const LinearModel& model, const Split& split) {
  check_compatible(model, split);
  const auto n = static_cast<double>(split.size());
  const Eigen::ArrayXd z = predict(model, split.x).array();
  const Eigen::ArrayXd y = split.y.array();
  RiskGrad out;
  Eigen::ArrayXd residual;
  if (model.task == Task::regression) {
    residual = z - y;
    out.risk = residual.square().mean();
    residual *= 2.0;
  } else {
    out.risk = (softplus_array(z) - y * z).mean();
    residual = sigmoid_array(z) - y;
  }
  out.grad_w = split.x.transpose() * residual.matrix() / n;
  out.grad_b = residual.mean();
  return out;
}

double scale_risk_grad(const LinearModel& model, const Split& split) {
  check_compatible(model, split);
  const Eigen::ArrayXd z = predict(model, split.x).array();
  const Eigen::ArrayXd y = split.y.array();
  if (model.task == Task::regression) return 2.0 * ((z - y) * z).mean();
  return ((sigmoid_array(z) - y) * z).mean();
}

double zero_one_error(const LinearModel& model, const Split& split) {
  if (split.task != Task::classification) throw ConfigError("zero_one_error on a regression split");
  check_compatible(model, split);
  const Vec z = predict(model, split.x);
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if ((z[i] > 0.0) != (split.y[i] == 1.0)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(z.size());
}

double mse_error(const LinearModel& model, const Split& split) {
  if (split.task != Task::regression) throw ConfigError("mse_error on a classification split");
  check_compatible(model, split);
  return (predict(model, split.x) - split.y).squaredNorm() / static_cast<double>(split.size());
}

double evaluation_error(const LinearModel& model, const Split& split) {
  return split.task == Task::regression ? mse_error(model, split) : zero_one_error(model, split);
}

EnvironmentRisk::EnvironmentRisk(const Split& split)
    : task_(split.task), n_(split.size()), dim_(split.dim()) {
  if (n_ == 0) throw ConfigError("EnvironmentRisk: empty split");
  if (task_ == Task::classification) {
    split_ = &split;
    return;
  }
  const double inv_n = 1.0 / static_cast<double>(n_);
  Mat aug(n_, dim_ + 1);
  aug.leftCols(dim_) = split.x;
  aug.col(dim_).setOnes();
  second_moment_ = Mat::Zero(dim_ + 1, dim_ + 1);
  second_moment_.selfadjointView<Eigen::Lower>().rankUpdate(aug.transpose(), inv_n);
  second_moment_ = second_moment_.selfadjointView<Eigen::Lower>();
  cross_moment_ = aug.transpose() * split.y * inv_n;
  y_moment_ = split.y.squaredNorm() * inv_n;
}

RiskTerms EnvironmentRisk::evaluate(const Vec& theta, EvalOptions options) const {
  RiskTerms out;
  out.risk = std::numeric_limits<double>::quiet_NaN();
  if (task_ == Task::regression) {
    const Vec a_theta = second_moment_ * theta;
    const double quad = theta.dot(a_theta);
    const double lin = theta.dot(cross_moment_);
    if (options.risk) out.risk = quad - 2.0 * lin + y_moment_;
    out.grad = 2.0 * (a_theta - cross_moment_);
    if (options.scale_grad) {
      out.scale_grad = 2.0 * (quad - lin);
      out.scale_grad_grad = 4.0 * a_theta - 2.0 * cross_moment_;
    }
    return out;
  }

  return evaluate_logistic(theta, options);
}

// One pass over the data in row blocks that stay in L1: logits, sigmoid,
// residuals and the transposed products are fused per block.
RiskTerms EnvironmentRisk::evaluate_logistic(const Vec& theta, EvalOptions options) const {
  using Block = Eigen::Array<double, Eigen::Dynamic, 1, 0, kBlockRows, 1>;
  const Mat& x = split_->x;
  const Vec& y = split_->y;
  const double bias = theta[dim_];

  RiskTerms out;
  out.risk = std::numeric_limits<double>::quiet_NaN();
  Vec grad = Vec::Zero(dim_ + 1);
  Vec scale_grad_grad = Vec::Zero(options.scale_grad ? dim_ + 1 : 0);
  double risk_sum = 0.0;
  double scale_sum = 0.0;

  Block z, s, r, q;
  for (Eigen::Index start = 0; start < n_; start += kBlockRows) {
    const Eigen::Index len = std::min<Eigen::Index>(kBlockRows, n_ - start);
    z.setConstant(len, bias);
    for (Eigen::Index k = 0; k < dim_; ++k) z += theta[k] * x.col(k).segment(start, len).array();
    const auto yb = y.segment(start, len).array();
    s = (1.0 + (-z).exp()).inverse();
    r = s - yb;
    for (Eigen::Index k = 0; k < dim_; ++k) grad[k] += (x.col(k).segment(start, len).array() * r).sum();
    grad[dim_] += r.sum();
    if (options.risk) risk_sum += (z.max(0.0) + (-z.abs()).exp().log1p() - yb * z).sum();
    if (options.scale_grad) {
      q = r + s * (1.0 - s) * z;
      for (Eigen::Index k = 0; k < dim_; ++k) {
        scale_grad_grad[k] += (x.col(k).segment(start, len).array() * q).sum();
      }
      scale_grad_grad[dim_] += q.sum();
      scale_sum += (r * z).sum();
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n_);
  out.grad = grad * inv_n;
  if (options.risk) out.risk = risk_sum * inv_n;
  if (options.scale_grad) {
    out.scale_grad = scale_sum * inv_n;
    out.scale_grad_grad = scale_grad_grad * inv_n;
  }
  return out;
}

Vec EnvironmentRisk::hessian_vector(const Vec& theta, const Vec& v) const {
  if (task_ == Task::regression) return 2.0 * (second_moment_ * v);
  using Block = Eigen::Array<double, Eigen::Dynamic, 1, 0, kBlockRows, 1>;
  const Mat& x = split_->x;
  Vec out = Vec::Zero(dim_ + 1);
  Block z, u, weighted;
  for (Eigen::Index start = 0; start < n_; start += kBlockRows) {
    const Eigen::Index len = std::min<Eigen::Index>(kBlockRows, n_ - start);
    z.setConstant(len, theta[dim_]);
    u.setConstant(len, v[dim_]);
    for (Eigen::Index k = 0; k < dim_; ++k) {
      const auto col = x.col(k).segment(start, len).array();
      z += theta[k] * col;
      u += v[k] * col;
    }
    weighted = (1.0 + (-z).exp()).inverse();
    weighted = weighted * (1.0 - weighted) * u;
    for (Eigen::Index k = 0; k < dim_; ++k) out[k] += (x.col(k).segment(start, len).array() * weighted).sum();
    out[dim_] += weighted.sum();
  }
  return out / static_cast<double>(n_);
}

AdamState AdamState::init(Eigen::Index n_params, double lr, double weight_decay) {
  AdamState state;
  state.m = Vec::Zero(n_params);
  state.v = Vec::Zero(n_params);
  state.lr = lr;
  state.weight_decay = weight_decay;
  return state;
}

void adam_update(AdamState& state, Vec& theta, const Vec& grad) {
  if (!grad.allFinite()) {
    throw std::domain_error(fmt::format("adam_update: non-finite gradient at step {}", state.t));
  }
  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const Eigen::Index d = theta.size() - 1;
  const Vec step = (state.m / correction1).array() / ((state.v / correction2).array().sqrt() + state.eps);
  if (state.weight_decay != 0.0) theta.head(d) -= state.lr * state.weight_decay * theta.head(d);
  theta -= state.lr * step;
}

AdamResult adam_step(AdamState state, LinearModel model, const Vec& grad_w, double grad_b) {
  Vec theta = model.params();
  Vec grad(theta.size());
  grad.head(grad_w.size()) = grad_w;
  grad[grad_w.size()] = grad_b;
  adam_update(state, theta, grad);
  return {LinearModel::from_params(theta, model.task), std::move(state)};
}

}  // namespace invbench
