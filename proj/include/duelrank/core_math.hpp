#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "duelrank/dataset.hpp"

namespace duelrank {

struct LinkValue {
  double mu;        // sigmoid value, in (0,1)
  double mu_prime;  // derivative mu*(1-mu), in (0, 0.25]
};

// Sigmoid link and its derivative, stable for |t| up to ~700.
inline LinkValue sigmoid_link(double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("non-finite argument");
  double mu;
  if (t >= 0.0) {
    const double e = std::exp(-t);
    mu = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(t);
    mu = e / (1.0 + e);
  }
  return {mu, mu * (1.0 - mu)};
}

// Worst-case inverse link slope over |t| <= L. mu' is unimodal with its
// maximum at 0, so the sup is attained at the boundary: kappa(L) = 1/mu'(L).
inline double kappa(double L) {
  if (!(L >= 0.0)) throw std::invalid_argument("negative range");
  if (L > 700.0) throw std::invalid_argument("range too large for double");
  const LinkValue v = sigmoid_link(L);
  return 1.0 / v.mu_prime;
}

struct LikelihoodTerm {
  double t;  // inner product x . theta
  int y;     // binary label
};

// Per-record Bradley-Terry log-likelihood, in log1p-stable form.
inline double log_likelihood(const LikelihoodTerm& term) {
  if (!std::isfinite(term.t)) throw std::invalid_argument("non-finite argument");
  if (term.y != 0 && term.y != 1) throw std::invalid_argument("label not in {0,1}");
  // y=1: -log(1+exp(-t)); y=0: -log(1+exp(t)). Guard against exp overflow.
  const double s = term.y == 1 ? -term.t : term.t;
  if (s > 36.0) return -s - std::log1p(std::exp(-s));
  return -std::log1p(std::exp(s));
}

// Regularized negative log-likelihood and its gradient:
//   value(theta) = -sum_i l(x_i.theta, y_i) + lambda * n * |theta|^2
//   grad(theta)  =  sum_i (mu(x_i.theta) - y_i) x_i + 2 lambda n theta
inline std::pair<double, Eigen::VectorXd> reg_nll_value_grad(
    const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
    const Eigen::VectorXd& theta, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("negative lambda");
  if (features.cols() != theta.size())
    throw std::invalid_argument("dimension mismatch");
  if (features.rows() != labels.size())
    throw std::invalid_argument("dimension mismatch");
  const Eigen::Index n = features.rows();
  double value = 0.0;
  Eigen::VectorXd residual(n);
  if (n > 0) {
    const Eigen::ArrayXd t = (features * theta).array();
    if (!t.isFinite().all())
      throw std::invalid_argument("non-finite argument");
    // -l(t, y) = softplus(s) with s = t for y=0 and s = -t for y=1, written
    // in the overflow-safe form max(s,0) + log1p(exp(-|s|)).
    const Eigen::ArrayXd yb = (labels.array() > 0.5).cast<double>();
    const Eigen::ArrayXd s = (1.0 - 2.0 * yb) * t;
    value = (s.max(0.0) + (-s.abs()).exp().log1p()).sum();
    const Eigen::ArrayXd e = (-t.abs()).exp();
    const Eigen::ArrayXd mu = (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
    residual = mu - labels.array();
  }
  const double nd = static_cast<double>(n);
  value += lambda * nd * theta.squaredNorm();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  if (n > 0) grad = features.transpose() * residual;
  grad += 2.0 * lambda * nd * theta;
  return {value, grad};
}

inline std::pair<double, Eigen::VectorXd> reg_nll_value_grad(
    const ComparisonDataset& data, const Eigen::VectorXd& theta, double lambda) {
  return reg_nll_value_grad(data.features, data.labels, theta, lambda);
}

struct BracketGaps {
  double upper_gap;  // slack of the concavity-side quadratic upper bound
  double lower_gap;  // slack of the quadratic lower bound
};

// Quadratic brackets of the log-likelihood around t_star. Both gaps are
// nonnegative whenever |t| <= L1, |t_star| <= L1, |t - t_star| <= C,
// L1 >= max(|t_star|, 1), C > 1.
inline BracketGaps likelihood_bracket(double t, double t_star, int y, double L1,
                                      double C) {
  if (!(std::abs(t) <= L1 && std::abs(t_star) <= L1 &&
        std::abs(t - t_star) <= C && L1 >= std::max(std::abs(t_star), 1.0) &&
        C > 1.0))
    throw std::invalid_argument("bracket preconditions violated");
  if (y != 0 && y != 1) throw std::invalid_argument("label not in {0,1}");
  const double l_t = log_likelihood({t, y});
  const double l_star = log_likelihood({t_star, y});
  const double mu_star = sigmoid_link(t_star).mu;
  const double dt = t - t_star;
  const double linear = l_star + (y - mu_star) * dt;
  const double kap = kappa(std::abs(t_star));
  const double upper = linear - dt * dt / (20.0 * L1 * kap);
  const double lower = linear - std::exp(C) / kap * dt * dt;
  return {upper - l_t, l_t - lower};
}

}  // namespace duelrank
