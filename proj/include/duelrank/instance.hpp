#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "duelrank/core_math.hpp"
#include "duelrank/dataset.hpp"
#include "duelrank/linalg.hpp"
#include "duelrank/rng.hpp"

namespace duelrank {

enum class RelevanceKind { kUniform, kGeometric, kSparse };

struct RelevanceProfile {
  RelevanceKind kind = RelevanceKind::kUniform;
  double ratio = 0.5;  // geometric decay
  int sparsity = 1;    // nonzero count for the sparse profile
};

struct InstanceConfig {
  int d = 8;
  int k = 2;
  int M = 4;
  int n_contexts = 6;
  int n_actions = 4;
  double B_x = 2.0;
  double B_theta = 2.0;
  RelevanceProfile relevance;
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 2) throw std::invalid_argument("config: d must be >= 2");
    if (k < 1 || k > d) throw std::invalid_argument("config: need 1 <= k <= d");
    if (M < 1) throw std::invalid_argument("config: M must be >= 1");
    if (n_contexts < 1 || n_actions < 2)
      throw std::invalid_argument("config: need contexts >= 1, actions >= 2");
    if (!(B_x > 0.0) || !(B_theta > 0.0))
      throw std::invalid_argument("config: bounds must be positive");
  }
};

// Ground-truth synthetic world. Immutable after construction.
struct MultiTaskInstance {
  InstanceConfig config;
  // phi.row(context * n_actions + action) is the d-dim feature of (s, a).
  Eigen::MatrixXd phi;
  Eigen::VectorXd rho;     // target-task context distribution
  Eigen::MatrixXd B_true;  // d x k, column-orthonormal
  Eigen::MatrixXd W_true;  // k x M
  std::vector<Eigen::VectorXd> theta_true;  // size M+1; index M is the target
  Eigen::VectorXd nu_true;                  // size M

  Eigen::VectorXd feature(int context, int action) const {
    return phi.row(context * config.n_actions + action).transpose();
  }
  Eigen::VectorXd feature_diff(int context, int a1, int a2) const {
    return feature(context, a1) - feature(context, a2);
  }
  const Eigen::VectorXd& target_theta() const { return theta_true.back(); }
  int n_action_pairs() const {
    return config.n_actions * (config.n_actions - 1) / 2;
  }
};

namespace detail {

inline int pair_index_to_actions(int idx, int n_actions, int* a2) {
  // Enumerates unordered pairs (a, b), a < b, in lexicographic order.
  for (int a = 0; a < n_actions - 1; ++a) {
    const int block = n_actions - 1 - a;
    if (idx < block) {
      *a2 = a + 1 + idx;
      return a;
    }
    idx -= block;
  }
  throw std::logic_error("pair index out of range");
}

}  // namespace detail

inline Eigen::VectorXd draw_relevance(const RelevanceProfile& profile, int M,
                                      Rng& rng) {
  Eigen::VectorXd nu(M);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (profile.kind) {
    case RelevanceKind::kUniform:
      nu.setConstant(1.0 / M);
      break;
    case RelevanceKind::kGeometric:
      for (int m = 0; m < M; ++m) {
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        nu[m] = sign * std::pow(profile.ratio, m);
      }
      nu /= nu.lpNorm<1>();
      break;
    case RelevanceKind::kSparse: {
      const int s = std::min(std::max(profile.sparsity, 1), M);
      std::vector<int> order(M);
      for (int m = 0; m < M; ++m) order[m] = m;
      std::shuffle(order.begin(), order.end(), rng);
      nu.setZero();
      for (int j = 0; j < s; ++j) {
        const double mag = 0.5 + 0.5 * unit(rng);
        nu[order[j]] = (unit(rng) < 0.5 ? -1.0 : 1.0) * mag;
      }
      nu /= nu.lpNorm<1>();
      break;
    }
  }
  return nu;
}

inline MultiTaskInstance generate_instance(const InstanceConfig& cfg) {
  cfg.validate();
  MultiTaskInstance inst;
  inst.config = cfg;
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  inst.B_true = detail::random_orthonormal(rng, cfg.d, cfg.k);

  // Source parameters: directions on the latent sphere, radius 0.9 B_theta.
  inst.W_true.resize(cfg.k, cfg.M);
  inst.theta_true.resize(cfg.M + 1);
  for (int m = 0; m < cfg.M; ++m) {
    Eigen::VectorXd w = detail::gaussian_vector(rng, cfg.k);
    w *= 0.9 * cfg.B_theta / w.norm();
    inst.W_true.col(m) = w;
    inst.theta_true[m] = inst.B_true * w;
  }

  inst.nu_true = draw_relevance(cfg.relevance, cfg.M, rng);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(cfg.d);
  for (int m = 0; m < cfg.M; ++m) target += inst.nu_true[m] * inst.theta_true[m];
  // Rescale nu (not the sources) if the combination leaves the ball; the
  // linear-combination identity must survive.
  const double norm = target.norm();
  if (norm > cfg.B_theta) {
    const double scale = cfg.B_theta / norm;
    inst.nu_true *= scale;
    target *= scale;
  }
  inst.theta_true[cfg.M] = target;

  // Bounded isotropic features: uniform in the ball of radius B_x/2, so any
  // pairwise difference has norm <= B_x by the triangle inequality.
  const int rows = cfg.n_contexts * cfg.n_actions;
  inst.phi.resize(rows, cfg.d);
  for (int r = 0; r < rows; ++r) {
    Eigen::VectorXd dir = detail::gaussian_vector(rng, cfg.d);
    dir /= dir.norm();
    const double radius =
        0.5 * cfg.B_x * std::pow(unit(rng), 1.0 / cfg.d);
    inst.phi.row(r) = (radius * dir).transpose();
  }

  inst.rho.resize(cfg.n_contexts);
  for (int s = 0; s < cfg.n_contexts; ++s) inst.rho[s] = 0.1 + unit(rng);
  inst.rho /= inst.rho.sum();
  return inst;
}

// n i.i.d. preference records from one task (1-based index; M+1 = target).
// Contexts follow rho for the target task, uniform for source tasks.
inline ComparisonDataset sample_dataset(const MultiTaskInstance& inst, int task,
                                        int n, std::uint64_t seed) {
  const InstanceConfig& cfg = inst.config;
  if (task < 1 || task > cfg.M + 1)
    throw std::invalid_argument("invalid task index");
  if (n < 0) throw std::invalid_argument("negative sample count");
  const bool is_target = task == cfg.M + 1;
  const Eigen::VectorXd& theta = inst.theta_true[task - 1];
  const int n_pairs = inst.n_action_pairs();

  ComparisonDataset data;
  data.task_id = task;
  data.features.resize(n, cfg.d);
  data.labels.resize(n);
  data.context_ids.reserve(n);
  data.action_pairs.reserve(n);
  data.record_ids.reserve(n);

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    int context;
    if (is_target) {
      double u = unit(rng);
      context = cfg.n_contexts - 1;
      for (int s = 0; s < cfg.n_contexts; ++s) {
        u -= inst.rho[s];
        if (u < 0.0) {
          context = s;
          break;
        }
      }
    } else {
      context = std::min(static_cast<int>(unit(rng) * cfg.n_contexts),
                         cfg.n_contexts - 1);
    }
    const int pair_idx =
        std::min(static_cast<int>(unit(rng) * n_pairs), n_pairs - 1);
    int a2 = 0;
    const int a1 = detail::pair_index_to_actions(pair_idx, cfg.n_actions, &a2);
    const Eigen::VectorXd x = inst.feature_diff(context, a1, a2);
    const double mu = sigmoid_link(x.dot(theta)).mu;
    data.features.row(i) = x.transpose();
    data.labels[i] = unit(rng) < mu ? 1.0 : 0.0;
    data.context_ids.push_back(context);
    data.action_pairs.emplace_back(a1, a2);
    data.record_ids.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
  return data;
}

// Exact Fisher information matrix of a task: the finite sum over the
// discrete (context, action-pair) design of p * mu'(x.theta) x x^T.
inline Eigen::MatrixXd fisher_matrix(const MultiTaskInstance& inst, int task) {
  const InstanceConfig& cfg = inst.config;
  if (task < 1 || task > cfg.M + 1)
    throw std::invalid_argument("invalid task index");
  const bool is_target = task == cfg.M + 1;
  const Eigen::VectorXd& theta = inst.theta_true[task - 1];
  const int n_pairs = inst.n_action_pairs();
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(cfg.d, cfg.d);
  for (int s = 0; s < cfg.n_contexts; ++s) {
    const double p_context =
        is_target ? inst.rho[s] : 1.0 / cfg.n_contexts;
    for (int a = 0; a < cfg.n_actions; ++a) {
      for (int b = a + 1; b < cfg.n_actions; ++b) {
        const Eigen::VectorXd x = inst.feature_diff(s, a, b);
        const double w =
            p_context / n_pairs * sigmoid_link(x.dot(theta)).mu_prime;
        E.noalias() += w * x * x.transpose();
      }
    }
  }
  return E;
}

// Minimum-l1 relevance vector: argmin |nu|_1 s.t. sum nu_m theta*_m = theta*.
// Solved by ADMM basis pursuit on the tiny M-dimensional system.
inline Eigen::VectorXd min_l1_relevance(const MultiTaskInstance& inst) {
  const int M = inst.config.M;
  const int d = inst.config.d;
  Eigen::MatrixXd A(d, M);
  for (int m = 0; m < M; ++m) A.col(m) = inst.theta_true[m];
  const Eigen::VectorXd& b = inst.target_theta();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  const Eigen::VectorXd nu_ls = cod.solve(b);
  if ((A * nu_ls - b).norm() > 1e-6 * std::max(1.0, b.norm()))
    throw std::runtime_error("target outside source span");

  // ADMM: x-step projects onto the affine set {A nu = b}, z-step is the
  // l1 shrinkage, u the scaled dual.
  const double rho = 1.0;
  Eigen::VectorXd x = nu_ls, z = nu_ls,
                  u = Eigen::VectorXd::Zero(M);
  auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return v - cod.solve(A * v - b);
  };
  auto shrink = [&](const Eigen::VectorXd& v, double t) -> Eigen::VectorXd {
    return v.unaryExpr([t](double c) {
      return c > t ? c - t : (c < -t ? c + t : 0.0);
    });
  };
  for (int iter = 0; iter < 200000; ++iter) {
    x = project(z - u);
    const Eigen::VectorXd z_new = shrink(x + u, 1.0 / rho);
    const double dual_res = rho * (z_new - z).norm();
    z = z_new;
    u += x - z;
    if ((x - z).norm() < 1e-11 && dual_res < 1e-11) break;
  }
  return x;  // feasible by construction of the projection step
}

// C_theta: reciprocal of the smallest nonzero singular value of
// H^{1/2} [theta*_1 ... theta*_M]. Every unit-H-norm element of the source
// span then has a representing coefficient vector with |alpha|_2 <= C_theta.
inline double representation_constant(const MultiTaskInstance& inst,
                                      const Eigen::MatrixXd& H) {
  const int M = inst.config.M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("H not positive definite");
  const Eigen::MatrixXd H_half = eig.operatorSqrt();
  Eigen::MatrixXd A(inst.config.d, M);
  for (int m = 0; m < M; ++m) A.col(m) = H_half * inst.theta_true[m];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = 1e-10 * sv[0];
  double smallest = sv[0];
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) smallest = sv[i];
  return 1.0 / smallest;
}

struct FisherDiagnostics {
  Eigen::MatrixXd E_avg;  // mean of E_m over all M+1 tasks
  double C1 = 0.0;        // min_m lambda_min(E^{-1/2} E_m E^{-1/2})
  double C2 = 0.0;        // max_m lambda_max(E^{-1/2} E_m E^{-1/2})
};

// Reports how far the instance is from the ideal of identical Fisher
// matrices across tasks. Values are diagnostic, not asserted.
inline FisherDiagnostics fisher_diagnostics(const MultiTaskInstance& inst) {
  const int M = inst.config.M;
  std::vector<Eigen::MatrixXd> Es;
  Es.reserve(M + 1);
  for (int task = 1; task <= M + 1; ++task)
    Es.push_back(fisher_matrix(inst, task));
  FisherDiagnostics diag;
  diag.E_avg = Eigen::MatrixXd::Zero(inst.config.d, inst.config.d);
  for (const auto& E : Es) diag.E_avg += E;
  diag.E_avg /= static_cast<double>(M + 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(diag.E_avg);
  const Eigen::MatrixXd E_inv_half = eig.operatorInverseSqrt();
  diag.C1 = std::numeric_limits<double>::infinity();
  diag.C2 = 0.0;
  for (const auto& E : Es) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rel(E_inv_half * E *
                                                       E_inv_half);
    diag.C1 = std::min(diag.C1, rel.eigenvalues().minCoeff());
    diag.C2 = std::max(diag.C2, rel.eigenvalues().maxCoeff());
  }
  return diag;
}

}  // namespace duelrank
