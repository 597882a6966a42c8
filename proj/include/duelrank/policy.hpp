#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "duelrank/instance.hpp"

namespace duelrank {

struct ConfidenceEllipsoid {
  Eigen::VectorXd center;  // theta hat
  Eigen::MatrixXd shape;   // Lambda, PD
  double radius = 0.0;     // alpha * epsilon

  void validate() const {
    if (radius < 0.0) throw std::invalid_argument("negative radius");
    Eigen::LLT<Eigen::MatrixXd> llt(shape);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("shape not positive definite");
  }
};

enum class PolicyMode { kExact, kGreedy };

inline const char* policy_mode_name(PolicyMode mode) {
  return mode == PolicyMode::kExact ? "exact" : "greedy";
}

struct Policy {
  std::vector<int> action;  // indexed by context
  PolicyMode method_tag = PolicyMode::kGreedy;
};

namespace detail {

// |v|_{Lambda^{-1}} via the Cholesky factor: solve L z = v, take |z|.
inline double inv_mahalanobis_norm(const Eigen::LLT<Eigen::MatrixXd>& llt,
                                   const Eigen::VectorXd& v) {
  return llt.matrixL().solve(v).norm();
}

}  // namespace detail

// Pessimistic value of a fixed policy: v^T center - radius |v|_{Lambda^{-1}}
// with v the rho-average of the chosen features.
inline double pessimistic_value(const MultiTaskInstance& inst,
                                const ConfidenceEllipsoid& ell,
                                const std::vector<int>& action) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(inst.config.d);
  for (int s = 0; s < inst.config.n_contexts; ++s)
    v += inst.rho[s] * inst.feature(s, action[s]);
  Eigen::LLT<Eigen::MatrixXd> llt(ell.shape);
  return v.dot(ell.center) -
         ell.radius * detail::inv_mahalanobis_norm(llt, v);
}

// Policy maximizing the pessimistic expected value over the ellipsoid.
// Exact mode enumerates every deterministic policy (guarded at 1e6);
// greedy mode takes the per-context lower-confidence-bound argmax, which is
// a surrogate because the Mahalanobis term couples contexts.
inline Policy pessimistic_policy(const MultiTaskInstance& inst,
                                 const ConfidenceEllipsoid& ell,
                                 PolicyMode mode) {
  ell.validate();
  const int S = inst.config.n_contexts;
  const int A = inst.config.n_actions;
  Eigen::LLT<Eigen::MatrixXd> llt(ell.shape);

  Policy pi;
  pi.method_tag = mode;
  pi.action.assign(S, 0);

  if (mode == PolicyMode::kGreedy) {
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        const Eigen::VectorXd f = inst.feature(s, a);
        const double lcb = f.dot(ell.center) -
                           ell.radius * detail::inv_mahalanobis_norm(llt, f);
        if (lcb > best) {
          best = lcb;
          pi.action[s] = a;
        }
      }
    }
    return pi;
  }

  double count = 1.0;
  for (int s = 0; s < S; ++s) {
    count *= A;
    if (count > 1e6)
      throw std::runtime_error("enumeration infeasible, use greedy");
  }

  // Mixed-radix odometer in lexicographic order; strict improvement keeps
  // the lexicographically lowest argmax.
  std::vector<int> current(S, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(inst.config.d);
    for (int s = 0; s < S; ++s) v += inst.rho[s] * inst.feature(s, current[s]);
    const double value = v.dot(ell.center) -
                         ell.radius * detail::inv_mahalanobis_norm(llt, v);
    if (value > best) {
      best = value;
      pi.action = current;
    }
    int s = S - 1;
    while (s >= 0 && ++current[s] == A) current[s--] = 0;
    if (s < 0) break;
  }
  return pi;
}

// SubOpt(pi) = sum_s rho(s) [max_a phi(s,a).theta* - phi(s,pi(s)).theta*].
inline double evaluate_suboptimality(const MultiTaskInstance& inst,
                                     const Policy& pi) {
  if (static_cast<int>(pi.action.size()) != inst.config.n_contexts)
    throw std::invalid_argument("policy does not cover all contexts");
  const Eigen::VectorXd& theta = inst.target_theta();
  double subopt = 0.0;
  for (int s = 0; s < inst.config.n_contexts; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < inst.config.n_actions; ++a)
      best = std::max(best, inst.feature(s, a).dot(theta));
    subopt += inst.rho[s] * (best - inst.feature(s, pi.action[s]).dot(theta));
  }
  return subopt;
}

// Optimal policy under a given parameter: per-context argmax of the linear
// reward (exact, the objective decomposes across contexts). Lowest action
// index on ties.
inline Policy optimal_policy(const MultiTaskInstance& inst,
                             const Eigen::VectorXd& theta) {
  Policy pi;
  pi.method_tag = PolicyMode::kExact;
  pi.action.assign(inst.config.n_contexts, 0);
  for (int s = 0; s < inst.config.n_contexts; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < inst.config.n_actions; ++a) {
      const double r = inst.feature(s, a).dot(theta);
      if (r > best) {
        best = r;
        pi.action[s] = a;
      }
    }
  }
  return pi;
}

inline Policy optimal_policy(const MultiTaskInstance& inst) {
  return optimal_policy(inst, inst.target_theta());
}

// Coverage coefficient C* = |E_rho phi(s, pi*(s))|^2_{H^{-1}}.
inline double coverage_coefficient(const MultiTaskInstance& inst,
                                   const Eigen::MatrixXd& H) {
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("H not positive definite");
  const Policy pi_star = optimal_policy(inst);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(inst.config.d);
  for (int s = 0; s < inst.config.n_contexts; ++s)
    v += inst.rho[s] * inst.feature(s, pi_star.action[s]);
  const double norm = detail::inv_mahalanobis_norm(llt, v);
  return norm * norm;
}

}  // namespace duelrank
