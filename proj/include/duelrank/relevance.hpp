#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "duelrank/estimators.hpp"

namespace duelrank {

struct AllocationPlan {
  std::vector<int> n;  // per-source sample counts, sums to N
  int N = 0;
};

// Per-task budgets (|nu_m|/(2|nu|_1) + 1/(2M)) N, integerized by
// largest-remainder rounding so the counts sum to N exactly. Invariant to
// positive rescaling of nu.
inline AllocationPlan active_sample(int N, const Eigen::VectorXd& nu) {
  const int M = static_cast<int>(nu.size());
  if (M < 1 || N < M) throw std::invalid_argument("need N >= M >= 1");
  const double l1 = nu.lpNorm<1>();
  if (l1 == 0.0) throw std::invalid_argument("undefined proportions");
  std::vector<double> targets(M);
  for (int m = 0; m < M; ++m)
    targets[m] = (std::abs(nu[m]) / (2.0 * l1) + 0.5 / M) * N;
  AllocationPlan plan;
  plan.N = N;
  plan.n.resize(M);
  int assigned = 0;
  std::vector<std::pair<double, int>> remainders(M);
  for (int m = 0; m < M; ++m) {
    plan.n[m] = static_cast<int>(std::floor(targets[m]));
    assigned += plan.n[m];
    remainders[m] = {targets[m] - plan.n[m], m};
  }
  // Largest fractional part first; ties broken by lower index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int j = 0; j < N - assigned; ++j) ++plan.n[remainders[j].second];
  return plan;
}

struct LassoProblem {
  std::vector<Eigen::VectorXd> theta_hats;  // M source estimates
  Eigen::VectorXd theta_target_hat;
  Eigen::MatrixXd Lambda;  // d x d, PD
  double beta = 0.0;       // l1 penalty
  Eigen::VectorXd nu0;     // prior, |nu0|_1 = 1, all entries nonzero
  double R = 0.0;          // ellipsoid bound sum nu_m^2/|nu0_m| <= R
};

namespace detail {

// Exact Euclidean projection onto {v : sum v_m^2 / w_m <= R}, w_m > 0:
// v_m = z_m / (1 + 2 gamma / w_m) with gamma found by bisection.
inline Eigen::VectorXd project_weighted_ellipsoid(const Eigen::VectorXd& z,
                                                  const Eigen::VectorXd& w,
                                                  double R) {
  auto residual = [&](double gamma) {
    double s = 0.0;
    for (Eigen::Index m = 0; m < z.size(); ++m) {
      const double v = z[m] / (1.0 + 2.0 * gamma / w[m]);
      s += v * v / w[m];
    }
    return s - R;
  };
  if (residual(0.0) <= 0.0) return z;
  double lo = 0.0, hi = 1.0;
  while (residual(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
    if (hi - lo < 1e-15 * (1.0 + hi)) break;
  }
  const double gamma = 0.5 * (lo + hi);
  Eigen::VectorXd v(z.size());
  for (Eigen::Index m = 0; m < z.size(); ++m)
    v[m] = z[m] / (1.0 + 2.0 * gamma / w[m]);
  return v;
}

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
  return v.unaryExpr(
      [t](double c) { return c > t ? c - t : (c < -t ? c + t : 0.0); });
}

}  // namespace detail

// Ellipsoid-constrained Lasso for the task-relevance vector:
//   min (1/2) |sum nu_m theta_m - theta|_Lambda^2 + beta |nu|_1
//   s.t. sum nu_m^2 / |nu0_m| <= R.
// Proximal gradient on the M x M Gram system; the prox of the l1 term plus
// the ellipsoid indicator is exactly soft-threshold followed by the scaled
// ellipsoid projection (both are diagonal shrinkages of the same form).
inline Eigen::VectorXd lasso_relevance(const LassoProblem& p,
                                       const SolverSettings& settings = {}) {
  settings.validate();
  const int M = static_cast<int>(p.theta_hats.size());
  if (M < 1) throw std::invalid_argument("empty problem");
  const int d = static_cast<int>(p.theta_target_hat.size());
  if (p.nu0.size() != M) throw std::invalid_argument("nu0 size mismatch");
  for (int m = 0; m < M; ++m)
    if (p.nu0[m] == 0.0)
      throw std::invalid_argument("nu0 entries must be nonzero");
  if (!(p.R > 0.0)) throw std::invalid_argument("R must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(p.Lambda);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("Lambda not positive definite");

  Eigen::MatrixXd Theta(d, M);
  for (int m = 0; m < M; ++m) Theta.col(m) = p.theta_hats[m];
  const Eigen::MatrixXd G = Theta.transpose() * p.Lambda * Theta;
  const Eigen::VectorXd b = Theta.transpose() * (p.Lambda * p.theta_target_hat);
  const double c0 = 0.5 * p.theta_target_hat.dot(p.Lambda * p.theta_target_hat);
  const Eigen::VectorXd weights = p.nu0.cwiseAbs();

  auto smooth = [&](const Eigen::VectorXd& nu) {
    return 0.5 * nu.dot(G * nu) - b.dot(nu) + c0;
  };
  auto objective = [&](const Eigen::VectorXd& nu) {
    return smooth(nu) + p.beta * nu.lpNorm<1>();
  };

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  const double L = std::max(eig.eigenvalues().maxCoeff(), 1e-14);
  double step = 1.0 / L;

  Eigen::VectorXd nu = detail::project_weighted_ellipsoid(
      Eigen::VectorXd::Zero(M), weights, p.R);
  double obj = objective(nu);
  const int max_iters = std::max(settings.max_inner_iters, 20000);
  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd grad = G * nu - b;
    Eigen::VectorXd cand;
    double obj_cand = obj;
    bool accepted = false;
    double s = step;
    for (int bt = 0; bt < 60; ++bt) {
      cand = detail::project_weighted_ellipsoid(
          detail::soft_threshold(nu - s * grad, p.beta * s), weights, p.R);
      obj_cand = objective(cand);
      if (obj_cand <= obj + 1e-15 * (1.0 + std::abs(obj))) {
        accepted = true;
        break;
      }
      s *= settings.step_shrink;
    }
    if (!accepted) break;
    const double move = (cand - nu).norm();
    nu = cand;
    obj = obj_cand;
    if (move < 1e-13 * (1.0 + nu.norm()) && iter > 2) break;
  }
  return nu;
}

}  // namespace duelrank
