#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "duelrank/core_math.hpp"
#include "duelrank/dataset.hpp"
#include "duelrank/linalg.hpp"
#include "duelrank/rng.hpp"

namespace duelrank {

struct SolverSettings {
  int max_outer_iters = 150;   // alternating rounds for the joint solver
  int max_inner_iters = 4000;  // FISTA iterations per convex subproblem
  double grad_tolerance = 1e-8;  // scaled by (1 + |objective|)
  int restarts = 3;
  double step_grow = 2.0;
  double step_shrink = 0.5;

  void validate() const {
    if (grad_tolerance <= 0.0)
      throw std::invalid_argument("settings: tolerance must be positive");
    if (max_inner_iters < 1 || max_outer_iters < 1 || restarts < 1)
      throw std::invalid_argument("settings: iteration budgets must be >= 1");
  }
};

struct SolverDiagnostics {
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

struct MleFailure : std::runtime_error {
  Eigen::VectorXd last_iterate;
  double grad_norm;
  MleFailure(const Eigen::VectorXd& theta, double g)
      : std::runtime_error("MLE solver did not converge (grad norm " +
                           std::to_string(g) + ")"),
        last_iterate(theta),
        grad_norm(g) {}
};

struct EstimateBundle {
  std::vector<Eigen::VectorXd> theta_hat;  // per source task
  Eigen::MatrixXd basis_hat;               // d x k, column-orthonormal
  std::optional<Eigen::VectorXd> theta_hat_target;
  Eigen::MatrixXd Lambda;
  double lambda_s = 0.0, lambda = 0.0, lambda_pre_s = 0.0, lambda_pre = 0.0,
         lambda_min = 0.0;
};

// Geometric midpoint of the admissible band B_x^2/d <= N lambda / M <= k/B_theta^2.
inline double default_lambda(int M, int N, int d, int k, double B_x,
                             double B_theta) {
  return static_cast<double>(M) / N *
         std::sqrt((B_x * B_x / d) * (k / (B_theta * B_theta)));
}

namespace detail {

inline Eigen::VectorXd project_ball(const Eigen::VectorXd& v, double radius) {
  const double n = v.norm();
  return n > radius ? Eigen::VectorXd(v * (radius / n)) : v;
}

// Monotone FISTA with backtracking for min f(theta) s.t. |theta|_2 <= radius,
// where f is the regularized NLL on (X, y). Terminates when the projected
// gradient-mapping norm drops below tol * (1 + |f|).
inline Eigen::VectorXd ball_constrained_mle(const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& y,
                                            double lambda, double radius,
                                            const SolverSettings& settings,
                                            const Eigen::VectorXd& init,
                                            SolverDiagnostics* diag = nullptr) {
  settings.validate();
  auto f = [&](const Eigen::VectorXd& th) {
    return reg_nll_value_grad(X, y, th, lambda);
  };
  Eigen::VectorXd theta = project_ball(init, radius);
  Eigen::VectorXd momentum = theta;
  double t_acc = 1.0;
  auto [fx, gx] = f(theta);
  // Initial step from the trace bound on the Hessian.
  const double L =
      std::max(0.25 * X.squaredNorm() + 2.0 * lambda * X.rows(), 1e-12);
  double step = 1.0 / L;

  double best_f = fx;
  Eigen::VectorXd best_theta = theta;
  bool converged = false;
  int iter = 0;
  for (; iter < settings.max_inner_iters; ++iter) {
    auto [fy, gy] = f(momentum);
    Eigen::VectorXd candidate;
    double f_cand;
    // Backtracking on the majorization at the momentum point.
    bool shrunk = false;
    for (int bt = 0; bt < 80; ++bt) {
      candidate = project_ball(momentum - step * gy, radius);
      f_cand = f(candidate).first;
      const Eigen::VectorXd diff = candidate - momentum;
      if (f_cand <= fy + gy.dot(diff) + diff.squaredNorm() / (2.0 * step) +
                        1e-14 * std::abs(fy))
        break;
      step *= settings.step_shrink;
      shrunk = true;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
    if (f_cand > best_f) {
      // Momentum overshoot: restart from the best point seen.
      momentum = best_theta;
      t_acc = 1.0;
      theta = best_theta;
    } else {
      momentum = candidate + (t_acc - 1.0) / t_next * (candidate - theta);
      theta = candidate;
      t_acc = t_next;
      if (f_cand < best_f) {
        best_f = f_cand;
        best_theta = candidate;
      }
    }
    // Convergence check at the best point.
    auto [fb, gb] = f(best_theta);
    const Eigen::VectorXd mapped =
        (best_theta - project_ball(best_theta - step * gb, radius)) / step;
    const double tol = settings.grad_tolerance * (1.0 + std::abs(fb));
    if (mapped.norm() < tol) {
      converged = true;
      break;
    }
    if (!shrunk) step *= settings.step_grow;  // grow only on clean steps
  }
  auto [ff, gf] = f(best_theta);
  const Eigen::VectorXd mapped =
      (best_theta - project_ball(best_theta - step * gf, radius)) / step;
  if (diag) {
    diag->iterations = iter;
    diag->objective = ff;
    diag->grad_norm = mapped.norm();
    diag->converged = converged;
  }
  if (!converged &&
      mapped.norm() >= 1e3 * settings.grad_tolerance * (1.0 + std::abs(ff)))
    throw MleFailure(best_theta, mapped.norm());
  return best_theta;
}

}  // namespace detail

// Regularized MLE over the Euclidean ball |theta| <= B_theta.
inline Eigen::VectorXd single_task_mle(const ComparisonDataset& data,
                                       double lambda, double B_theta,
                                       const SolverSettings& settings = {},
                                       SolverDiagnostics* diag = nullptr) {
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  data.validate();
  return detail::ball_constrained_mle(
      data.features, data.labels, lambda, B_theta, settings,
      Eigen::VectorXd::Zero(data.dim()), diag);
}

// MLE restricted to the span of a column-orthonormal basis: theta = basis w,
// solved as the k-dimensional convex problem with |w| <= B_theta.
inline Eigen::VectorXd subspace_mle(const ComparisonDataset& data,
                                    const Eigen::MatrixXd& basis, double lambda,
                                    double B_theta,
                                    const SolverSettings& settings = {},
                                    SolverDiagnostics* diag = nullptr) {
  if ((basis.transpose() * basis -
       Eigen::MatrixXd::Identity(basis.cols(), basis.cols()))
          .norm() > 1e-8)
    throw std::invalid_argument("basis not column-orthonormal");
  if (data.size() < 1) throw std::invalid_argument("empty dataset");
  const Eigen::MatrixXd Xk = data.features * basis;
  const Eigen::VectorXd w = detail::ball_constrained_mle(
      Xk, data.labels, lambda, B_theta, settings,
      Eigen::VectorXd::Zero(basis.cols()), diag);
  return basis * w;
}

struct JointLowRankFit {
  std::vector<Eigen::VectorXd> theta_hats;
  Eigen::MatrixXd basis_hat;  // d x k, column-orthonormal
  double objective = 0.0;
  int outer_iterations = 0;
};

namespace detail {

inline double joint_objective(const std::vector<ComparisonDataset>& datasets,
                              const Eigen::MatrixXd& B,
                              const Eigen::MatrixXd& W, double lambda) {
  double total = 0.0;
  for (size_t m = 0; m < datasets.size(); ++m) {
    const Eigen::VectorXd theta = B * W.col(m);
    total += reg_nll_value_grad(datasets[m], theta, lambda).first;
  }
  return total;
}

// One alternating pass: per-task w-steps (convex, exact to tolerance) and a
// backtracked gradient step on B followed by re-orthonormalization and ball
// repair. The accepted state never increases the joint objective.
inline double alternate_once(const std::vector<ComparisonDataset>& datasets,
                             Eigen::MatrixXd& B, Eigen::MatrixXd& W,
                             double lambda, double B_theta,
                             const SolverSettings& settings, double* b_step) {
  const int M = static_cast<int>(datasets.size());
  // w-step: B orthonormal, so |B w| = |w| and the ridge keeps its scale.
  // Warm-started from the previous round, so a modest iteration cap suffices;
  // the alternation outer loop supplies the remaining progress.
  SolverSettings inner = settings;
  inner.max_inner_iters = std::min(settings.max_inner_iters, 120);
  inner.grad_tolerance = std::max(settings.grad_tolerance, 1e-10);
  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXd Xk = datasets[m].features * B;
    try {
      W.col(m) = ball_constrained_mle(Xk, datasets[m].labels, lambda, B_theta,
                                      inner, W.col(m));
    } catch (const MleFailure& partial) {
      W.col(m) = partial.last_iterate;  // best iterate so far; keep alternating
    }
  }
  double obj = joint_objective(datasets, B, W, lambda);

  // B-step: gradient of the joint objective in B with W fixed.
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(B.rows(), B.cols());
  for (int m = 0; m < M; ++m) {
    const Eigen::VectorXd theta = B * W.col(m);
    const Eigen::VectorXd t = datasets[m].features * theta;
    Eigen::VectorXd residual(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i)
      residual[i] = sigmoid_link(t[i]).mu - datasets[m].labels[i];
    grad.noalias() += datasets[m].features.transpose() * residual *
                      W.col(m).transpose();
    grad.noalias() += 2.0 * lambda * datasets[m].size() * theta *
                      W.col(m).transpose();
  }
  double step = *b_step;
  for (int bt = 0; bt < 60; ++bt) {
    Eigen::MatrixXd B_cand = B - step * grad;
    // Absorb the QR factor into W so theta_m = B W is preserved, then scale
    // coefficients back into the ball where the step pushed them out.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(B_cand);
    Eigen::MatrixXd Q = qr.householderQ() *
                        Eigen::MatrixXd::Identity(B.rows(), B.cols());
    Eigen::MatrixXd R =
        qr.matrixQR().topRows(B.cols()).triangularView<Eigen::Upper>();
    Eigen::MatrixXd W_cand = R * W;
    for (int m = 0; m < M; ++m)
      W_cand.col(m) = project_ball(W_cand.col(m), B_theta);
    const double obj_cand = joint_objective(datasets, Q, W_cand, lambda);
    if (obj_cand <= obj) {
      B = Q;
      W = W_cand;
      obj = obj_cand;
      *b_step = step * settings.step_grow;
      return obj;
    }
    step *= settings.step_shrink;
  }
  *b_step = step;
  return obj;  // no acceptable B-step; w-steps already improved the objective
}

}  // namespace detail

// Rank-constrained regularized MLE via Burer-Monteiro factorization
// theta_m = B w_m with spectral initialization from the stacked single-task
// fits, alternating minimization, and multi-restart best-of.
inline JointLowRankFit joint_lowrank_mle(
    const std::vector<ComparisonDataset>& datasets, double lambda, int k,
    double B_theta, const SolverSettings& settings = {},
    std::uint64_t restart_seed = 0) {
  settings.validate();
  const int M = static_cast<int>(datasets.size());
  if (M < 1) throw std::invalid_argument("no datasets");
  const int d = static_cast<int>(datasets[0].dim());
  if (k < 1 || k > d) throw std::invalid_argument("need 1 <= k <= d");
  for (const auto& ds : datasets) {
    if (ds.size() < 1) throw std::invalid_argument("empty dataset");
    if (ds.dim() != d) throw std::invalid_argument("dimension mismatch");
  }

  // Spectral initialization: top-k left singular vectors of the stacked
  // single-task estimates, padded with random orthogonal directions when
  // the stack is rank-deficient.
  Eigen::MatrixXd stacked(d, M);
  for (int m = 0; m < M; ++m)
    stacked.col(m) =
        single_task_mle(datasets[m], lambda, B_theta, settings);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullU);
  Eigen::MatrixXd B0(d, k);
  const int usable = std::min(k, static_cast<int>(svd.singularValues().size()));
  B0.leftCols(usable) = svd.matrixU().leftCols(usable);
  if (usable < k) {
    Rng rng(derive_seed(restart_seed, 0xbadc0de));
    Eigen::MatrixXd extra(d, k - usable);
    for (int j = 0; j < k - usable; ++j)
      extra.col(j) = detail::gaussian_vector(rng, d);
    extra -= B0.leftCols(usable) * (B0.leftCols(usable).transpose() * extra);
    B0.rightCols(k - usable) = detail::orthonormalize(extra);
  }
  for (int j = 0; j < k; ++j) {
    int pivot = 0;
    B0.col(j).cwiseAbs().maxCoeff(&pivot);
    if (B0(pivot, j) < 0.0) B0.col(j) = -B0.col(j);
  }

  JointLowRankFit best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < settings.restarts; ++r) {
    Eigen::MatrixXd B = B0;
    if (r > 0) {
      // Perturbed restart: random rotation mixed into the initial frame.
      Rng rng(derive_seed(restart_seed, static_cast<std::uint64_t>(r)));
      Eigen::MatrixXd noise(d, k);
      for (int j = 0; j < k; ++j)
        noise.col(j) = 0.3 * detail::gaussian_vector(rng, d);
      B = detail::orthonormalize(B0 + noise);
    }
    Eigen::MatrixXd W(k, M);
    for (int m = 0; m < M; ++m)
      W.col(m) = detail::project_ball(
          Eigen::VectorXd(B.transpose() * stacked.col(m)), B_theta);

    double obj = detail::joint_objective(datasets, B, W, lambda);
    double b_step = 1e-2;
    int outer = 0;
    for (; outer < settings.max_outer_iters; ++outer) {
      const double prev = obj;
      obj = detail::alternate_once(datasets, B, W, lambda, B_theta, settings,
                                   &b_step);
      if (prev - obj <= settings.grad_tolerance * (1.0 + std::abs(obj))) break;
    }
    if (obj < best.objective) {
      best.objective = obj;
      best.outer_iterations = outer;
      best.basis_hat = detail::orthonormalize(B);
      best.theta_hats.assign(M, Eigen::VectorXd());
      for (int m = 0; m < M; ++m) best.theta_hats[m] = B * W.col(m);
    }
  }
  // Polish: solve each per-task coefficient problem to full tolerance with
  // the winning basis held fixed. This can only improve the objective.
  double polished = 0.0;
  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXd Xk = datasets[m].features * best.basis_hat;
    Eigen::VectorXd w0 = detail::project_ball(
        Eigen::VectorXd(best.basis_hat.transpose() * best.theta_hats[m]),
        B_theta);
    try {
      w0 = detail::ball_constrained_mle(Xk, datasets[m].labels, lambda,
                                        B_theta, settings, w0);
    } catch (const MleFailure& partial) {
      w0 = partial.last_iterate;
    }
    best.theta_hats[m] = best.basis_hat * w0;
    polished += reg_nll_value_grad(datasets[m], best.theta_hats[m], lambda).first;
  }
  best.objective = std::min(best.objective, polished);
  return best;
}

// Empirical information matrix Lambda = (1/N) sum_m sum_i mu'(x.theta_m) x x^T
// + lambda_min I.
inline Eigen::MatrixXd information_matrix(
    const std::vector<ComparisonDataset>& datasets,
    const std::vector<Eigen::VectorXd>& theta_hats, double lambda_min, int N) {
  if (datasets.size() != theta_hats.size())
    throw std::invalid_argument("dataset/estimate count mismatch");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  int d = 0;
  for (const auto& ds : datasets) d = std::max(d, static_cast<int>(ds.dim()));
  for (size_t m = 0; m < datasets.size(); ++m) {
    if (datasets[m].size() > 0 && datasets[m].dim() != theta_hats[m].size())
      throw std::invalid_argument("dimension mismatch");
    if (d == 0) d = static_cast<int>(theta_hats[m].size());
  }
  if (d == 0 && !theta_hats.empty()) d = static_cast<int>(theta_hats[0].size());
  Eigen::MatrixXd Lambda = Eigen::MatrixXd::Zero(d, d);
  for (size_t m = 0; m < datasets.size(); ++m) {
    const auto& ds = datasets[m];
    if (ds.size() == 0) continue;
    const Eigen::ArrayXd t = (ds.features * theta_hats[m]).array();
    const Eigen::ArrayXd e = (-t.abs()).exp();
    const Eigen::ArrayXd mu = (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
    const Eigen::ArrayXd w = mu * (1.0 - mu) / N;
    const Eigen::MatrixXd weighted =
        ds.features.array().colwise() * w.sqrt();
    Lambda.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
  }
  Lambda = Lambda.selfadjointView<Eigen::Lower>();
  Lambda += lambda_min * Eigen::MatrixXd::Identity(d, d);
  return Lambda;
}

}  // namespace duelrank
