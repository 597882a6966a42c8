#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "duelrank/estimators.hpp"
#include "duelrank/instance.hpp"
#include "duelrank/policy.hpp"
#include "duelrank/relevance.hpp"

namespace duelrank {

enum class AllocationMode { kActive, kUniform };
enum class LambdaSource { kPhase1, kAll };

struct Budgets {
  int N = 4000;      // known-relevance: total source budget
  int N_pre_s = 1000;  // unknown-relevance phase 1 source budget
  int n_pre = 400;     // phase 1 target samples
  int N_s = 4000;      // phase 2 source budget
  int n = 400;         // phase 2 target samples
};

struct AlgorithmParams {
  double epsilon = 0.5;
  double delta = 0.1;
  double alpha = 1.0;
  // Zero means "derive from the admissible band".
  double lambda_s = 0.0, lambda = 0.0, lambda_pre_s = 0.0, lambda_pre = 0.0;
  double beta = -1.0;  // negative: default rule; >=0: explicit override
  double R = -1.0;     // negative: default rule
  bool oracle_beta = false;  // tune beta/R from instance ground truth
  bool oracle_R = false;
  Eigen::VectorXd nu0;  // Algorithm 2 prior; empty = non-informative 1/M
  Budgets budgets;
  AllocationMode allocation = AllocationMode::kActive;
  LambdaSource lambda_from = LambdaSource::kAll;
  SolverSettings solver;
  std::uint64_t seed = 0;
};

struct RunReport {
  std::string algo;
  std::vector<int> allocation;      // phase-2 (or only) source allocation
  std::vector<int> allocation_pre;  // phase-1 allocation (Algorithm 2)
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd nu_hat;  // Algorithm 2 estimate; nu used by Algorithm 1
  double nu_l1 = 0.0;
  double err_h = 0.0;  // |theta_hat - theta*|_H
  double err_2 = 0.0;
  double subopt = 0.0;
  double c_star = 0.0;
  double c_theta = 0.0;
  double fisher_c1 = 0.0, fisher_c2 = 0.0;
  Policy policy;
  double joint_objective = 0.0;
  int joint_outer_iters = 0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
  double lambda_s = 0.0, lambda = 0.0, lambda_pre_s = 0.0, lambda_pre = 0.0;
  double beta_used = 0.0, R_used = 0.0, alpha = 0.0, epsilon = 0.0;
  EstimateBundle bundle;
};

namespace detail {

inline AllocationPlan uniform_allocation(int N, int M) {
  return active_sample(N, Eigen::VectorXd::Ones(M));
}

inline AllocationPlan make_plan(int N, const Eigen::VectorXd& nu,
                                AllocationMode mode) {
  return mode == AllocationMode::kActive
             ? active_sample(N, nu)
             : uniform_allocation(N, static_cast<int>(nu.size()));
}

// Seed streams: one child per (phase, task) pair.
inline std::uint64_t data_seed(std::uint64_t master, int phase, int task) {
  return derive_seed(master, static_cast<std::uint64_t>(phase) * 4096u +
                                 static_cast<std::uint64_t>(task));
}

inline std::vector<ComparisonDataset> sample_sources(
    const MultiTaskInstance& inst, const AllocationPlan& plan,
    std::uint64_t master, int phase) {
  std::vector<ComparisonDataset> out;
  out.reserve(plan.n.size());
  for (size_t m = 0; m < plan.n.size(); ++m)
    out.push_back(sample_dataset(inst, static_cast<int>(m) + 1, plan.n[m],
                                 data_seed(master, phase, static_cast<int>(m) + 1)));
  return out;
}

inline double h_norm(const Eigen::MatrixXd& H, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(H * v)));
}

// Orthonormal basis of span{theta_1,...,theta_M}, truncated at rank k.
inline Eigen::MatrixXd span_basis(const std::vector<Eigen::VectorXd>& thetas,
                                  int k) {
  const int d = static_cast<int>(thetas[0].size());
  Eigen::MatrixXd stacked(d, static_cast<int>(thetas.size()));
  for (size_t m = 0; m < thetas.size(); ++m) stacked.col(m) = thetas[m];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullU);
  const Eigen::VectorXd& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++rank;
  rank = std::max(1, std::min(rank, k));
  Eigen::MatrixXd basis = svd.matrixU().leftCols(rank);
  for (int j = 0; j < rank; ++j) {
    int pivot = 0;
    basis.col(j).cwiseAbs().maxCoeff(&pivot);
    if (basis(pivot, j) < 0.0) basis.col(j) = -basis.col(j);
  }
  return basis;
}

inline Policy extract_policy(const MultiTaskInstance& inst,
                             const ConfidenceEllipsoid& ell) {
  double count = 1.0;
  for (int s = 0; s < inst.config.n_contexts; ++s) {
    count *= inst.config.n_actions;
    if (count > 1e6) return pessimistic_policy(inst, ell, PolicyMode::kGreedy);
  }
  return pessimistic_policy(inst, ell, PolicyMode::kExact);
}

inline void fill_common_report(const MultiTaskInstance& inst, RunReport& rep,
                               double lambda_for_h) {
  const FisherDiagnostics diag = fisher_diagnostics(inst);
  const Eigen::MatrixXd H =
      diag.E_avg + lambda_for_h * Eigen::MatrixXd::Identity(inst.config.d,
                                                            inst.config.d);
  rep.fisher_c1 = diag.C1;
  rep.fisher_c2 = diag.C2;
  rep.err_h = h_norm(H, rep.theta_hat - inst.target_theta());
  rep.err_2 = (rep.theta_hat - inst.target_theta()).norm();
  rep.c_star = coverage_coefficient(inst, H);
  rep.c_theta = representation_constant(inst, H);
  rep.subopt = evaluate_suboptimality(inst, rep.policy);
}

}  // namespace detail

// Algorithm 1: known task relevance. Allocate, fit the joint low-rank MLE,
// combine with nu, build the confidence set, extract the pessimistic policy.
inline RunReport run_known(const MultiTaskInstance& inst,
                           const AlgorithmParams& params) {
  const auto t0 = std::chrono::steady_clock::now();
  const InstanceConfig& cfg = inst.config;
  const Eigen::VectorXd& nu = inst.nu_true;
  const int N = params.budgets.N;

  RunReport rep;
  rep.algo = params.allocation == AllocationMode::kActive ? "known-active"
                                                          : "known-uniform";
  rep.seed = params.seed;
  rep.alpha = params.alpha;
  rep.epsilon = params.epsilon;

  const AllocationPlan plan = detail::make_plan(N, nu, params.allocation);
  rep.allocation = plan.n;
  const std::vector<ComparisonDataset> datasets =
      detail::sample_sources(inst, plan, params.seed, /*phase=*/1);

  const double lambda =
      params.lambda_s > 0.0
          ? params.lambda_s
          : default_lambda(cfg.M, N, cfg.d, cfg.k, cfg.B_x, cfg.B_theta);
  rep.lambda_s = lambda;

  const JointLowRankFit fit = joint_lowrank_mle(
      datasets, lambda, cfg.k, cfg.B_theta, params.solver,
      derive_seed(params.seed, 0xf17));
  rep.joint_objective = fit.objective;
  rep.joint_outer_iters = fit.outer_iterations;

  Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(cfg.d);
  for (int m = 0; m < cfg.M; ++m) theta_hat += nu[m] * fit.theta_hats[m];
  rep.theta_hat = theta_hat;
  rep.nu_hat = nu;
  rep.nu_l1 = nu.lpNorm<1>();

  const Eigen::MatrixXd Lambda =
      information_matrix(datasets, fit.theta_hats, lambda, N);
  rep.bundle.theta_hat = fit.theta_hats;
  rep.bundle.basis_hat = fit.basis_hat;
  rep.bundle.theta_hat_target = theta_hat;
  rep.bundle.Lambda = Lambda;
  rep.bundle.lambda_s = lambda;
  rep.bundle.lambda_min = lambda;

  ConfidenceEllipsoid ell{theta_hat, Lambda, params.alpha * params.epsilon};
  rep.policy = detail::extract_policy(inst, ell);
  detail::fill_common_report(inst, rep, lambda);
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rep;
}

// Algorithm 2: unknown task relevance. Phase 1 estimates nu* from small
// budgets; phase 2 re-allocates, learns the subspace, and fits the target
// inside it. Data is freshly drawn per phase.
inline RunReport run_active(const MultiTaskInstance& inst,
                            const AlgorithmParams& params) {
  const auto t0 = std::chrono::steady_clock::now();
  const InstanceConfig& cfg = inst.config;
  const Budgets& budget = params.budgets;

  Eigen::VectorXd nu0 = params.nu0;
  if (nu0.size() == 0)
    nu0 = Eigen::VectorXd::Constant(cfg.M, 1.0 / cfg.M);
  if (std::abs(nu0.lpNorm<1>() - 1.0) > 1e-9)
    throw std::invalid_argument("nu0 must have unit l1 norm");

  RunReport rep;
  rep.algo = params.allocation == AllocationMode::kActive ? "active"
                                                          : "active-uniform";
  rep.seed = params.seed;
  rep.alpha = params.alpha;
  rep.epsilon = params.epsilon;

  const double lambda_pre_s =
      params.lambda_pre_s > 0.0
          ? params.lambda_pre_s
          : default_lambda(cfg.M, budget.N_pre_s, cfg.d, cfg.k, cfg.B_x,
                           cfg.B_theta);
  const double lambda_pre =
      params.lambda_pre > 0.0
          ? params.lambda_pre
          : default_lambda(1, budget.n_pre, cfg.d, cfg.k, cfg.B_x, cfg.B_theta);
  const double lambda_s =
      params.lambda_s > 0.0
          ? params.lambda_s
          : default_lambda(cfg.M, budget.N_s, cfg.d, cfg.k, cfg.B_x,
                           cfg.B_theta);
  const double lambda_t =
      params.lambda > 0.0
          ? params.lambda
          : default_lambda(1, budget.n, cfg.d, cfg.k, cfg.B_x, cfg.B_theta);
  const double lambda_min =
      std::min({lambda_pre_s, lambda_pre, lambda_s, lambda_t});
  rep.lambda_pre_s = lambda_pre_s;
  rep.lambda_pre = lambda_pre;
  rep.lambda_s = lambda_s;
  rep.lambda = lambda_t;

  // Phase 1: estimate nu*.
  const AllocationPlan plan_pre =
      detail::make_plan(budget.N_pre_s, nu0, params.allocation);
  rep.allocation_pre = plan_pre.n;
  const std::vector<ComparisonDataset> pre_sources =
      detail::sample_sources(inst, plan_pre, params.seed, /*phase=*/1);
  const JointLowRankFit pre_fit =
      joint_lowrank_mle(pre_sources, lambda_pre_s, cfg.k, cfg.B_theta,
                        params.solver, derive_seed(params.seed, 0xa1));
  const ComparisonDataset pre_target =
      sample_dataset(inst, cfg.M + 1, budget.n_pre,
                     detail::data_seed(params.seed, 1, cfg.M + 1));
  const Eigen::VectorXd theta_pre =
      single_task_mle(pre_target, lambda_pre, cfg.B_theta, params.solver);

  const Eigen::MatrixXd Lambda_pre = information_matrix(
      pre_sources, pre_fit.theta_hats, lambda_min, budget.N_pre_s);

  LassoProblem lasso;
  lasso.theta_hats = pre_fit.theta_hats;
  lasso.theta_target_hat = theta_pre;
  lasso.Lambda = Lambda_pre;
  lasso.nu0 = nu0;
  if (params.beta >= 0.0) {
    lasso.beta = params.beta;
  } else if (params.oracle_beta) {
    const Eigen::VectorXd nu_star = min_l1_relevance(inst);
    const FisherDiagnostics diag = fisher_diagnostics(inst);
    const Eigen::MatrixXd H =
        diag.E_avg +
        lambda_min * Eigen::MatrixXd::Identity(cfg.d, cfg.d);
    const double c_theta = representation_constant(inst, H);
    lasso.beta = nu_star.lpNorm<1>() / (c_theta * c_theta * cfg.M);
  } else {
    lasso.beta = detail::h_norm(Lambda_pre, theta_pre) *
                 std::sqrt(std::log(std::max(2.0, double(cfg.M))) /
                           budget.N_pre_s);
  }
  if (params.R > 0.0) {
    lasso.R = params.R;
  } else if (params.oracle_R) {
    const Eigen::VectorXd nu_star = min_l1_relevance(inst);
    double r = 0.0;
    for (int m = 0; m < cfg.M; ++m)
      r += nu_star[m] * nu_star[m] / std::abs(nu0[m]);
    lasso.R = std::max(r, 1e-8);
  } else {
    lasso.R = 2.0 * nu0.lpNorm<1>() * cfg.M;  // loose non-informative bound
  }
  rep.beta_used = lasso.beta;
  rep.R_used = lasso.R;

  const Eigen::VectorXd nu_hat = lasso_relevance(lasso, params.solver);
  rep.nu_hat = nu_hat;
  rep.nu_l1 = nu_hat.lpNorm<1>();

  // Phase 2: estimate theta*.
  const AllocationPlan plan =
      detail::make_plan(budget.N_s, nu_hat, params.allocation);
  rep.allocation = plan.n;
  const std::vector<ComparisonDataset> sources =
      detail::sample_sources(inst, plan, params.seed, /*phase=*/2);
  const JointLowRankFit fit =
      joint_lowrank_mle(sources, lambda_s, cfg.k, cfg.B_theta, params.solver,
                        derive_seed(params.seed, 0xa2));
  const Eigen::MatrixXd basis = detail::span_basis(fit.theta_hats, cfg.k);

  const ComparisonDataset target = sample_dataset(
      inst, cfg.M + 1, budget.n, detail::data_seed(params.seed, 2, cfg.M + 1));
  const Eigen::VectorXd theta_hat =
      subspace_mle(target, basis, lambda_t, cfg.B_theta, params.solver);
  rep.theta_hat = theta_hat;

  Eigen::MatrixXd Lambda;
  if (params.lambda_from == LambdaSource::kPhase1) {
    Lambda = Lambda_pre;
  } else {
    std::vector<ComparisonDataset> all = pre_sources;
    all.insert(all.end(), sources.begin(), sources.end());
    std::vector<Eigen::VectorXd> all_thetas = pre_fit.theta_hats;
    all_thetas.insert(all_thetas.end(), fit.theta_hats.begin(),
                      fit.theta_hats.end());
    Lambda = information_matrix(all, all_thetas, lambda_min,
                                budget.N_pre_s + budget.N_s);
  }

  rep.joint_objective = fit.objective;
  rep.joint_outer_iters = fit.outer_iterations;
  rep.bundle.theta_hat = fit.theta_hats;
  rep.bundle.basis_hat = basis;
  rep.bundle.theta_hat_target = theta_hat;
  rep.bundle.Lambda = Lambda;
  rep.bundle.lambda_s = lambda_s;
  rep.bundle.lambda = lambda_t;
  rep.bundle.lambda_pre_s = lambda_pre_s;
  rep.bundle.lambda_pre = lambda_pre;
  rep.bundle.lambda_min = lambda_min;

  ConfidenceEllipsoid ell{theta_hat, Lambda, params.alpha * params.epsilon};
  rep.policy = detail::extract_policy(inst, ell);
  detail::fill_common_report(inst, rep, lambda_min);
  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rep;
}

struct CalibrationResult {
  double alpha = 0.0;
  std::vector<double> normalized_errors;  // one per repetition, unsorted
};

// Empirical calibration of the confidence-set constant: fix the instance
// described by cfg, rerun the known-nu estimation stack on fresh comparison
// data per repetition, and return the smallest alpha whose coverage of the
// instance's target reaches 1 - delta.
inline CalibrationResult calibrate_alpha(const InstanceConfig& cfg,
                                         const AlgorithmParams& params,
                                         int reps) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  const MultiTaskInstance inst = generate_instance(cfg);
  const InstanceConfig& c = cfg;
  std::vector<double> normalized_errors;
  normalized_errors.reserve(reps);
  for (int rep = 0; rep < reps; ++rep) {
    AlgorithmParams p = params;
    p.seed = derive_seed(params.seed, 0x2000 + static_cast<std::uint64_t>(rep));
    const AllocationPlan plan =
        detail::make_plan(p.budgets.N, inst.nu_true, p.allocation);
    const std::vector<ComparisonDataset> datasets =
        detail::sample_sources(inst, plan, p.seed, 1);
    const double lambda =
        p.lambda_s > 0.0 ? p.lambda_s
                         : default_lambda(c.M, p.budgets.N, c.d, c.k, c.B_x,
                                          c.B_theta);
    const JointLowRankFit fit =
        joint_lowrank_mle(datasets, lambda, c.k, c.B_theta, p.solver,
                          derive_seed(p.seed, 0xf17));
    Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(c.d);
    for (int m = 0; m < c.M; ++m)
      theta_hat += inst.nu_true[m] * fit.theta_hats[m];
    const Eigen::MatrixXd Lambda =
        information_matrix(datasets, fit.theta_hats, lambda, p.budgets.N);
    normalized_errors.push_back(
        detail::h_norm(Lambda, theta_hat - inst.target_theta()) /
        params.epsilon);
  }
  CalibrationResult result;
  result.normalized_errors = normalized_errors;
  std::sort(normalized_errors.begin(), normalized_errors.end());
  const int idx = std::min<int>(
      reps - 1,
      std::max<int>(0, static_cast<int>(
                           std::ceil((1.0 - params.delta) * reps)) - 1));
  result.alpha = normalized_errors[idx];
  return result;
}

}  // namespace duelrank
