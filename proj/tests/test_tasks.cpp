#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "duelrank/instance.hpp"

using namespace duelrank;

namespace {

InstanceConfig small_config() {
  InstanceConfig cfg;
  cfg.d = 8;
  cfg.k = 2;
  cfg.M = 4;
  cfg.n_contexts = 5;
  cfg.n_actions = 3;
  cfg.seed = 11;
  cfg.relevance.kind = RelevanceKind::kGeometric;
  cfg.relevance.ratio = 0.5;
  return cfg;
}

// Hand-built single-context two-action instance with a prescribed feature
// difference and target parameter.
MultiTaskInstance tiny_instance(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& theta) {
  MultiTaskInstance inst;
  inst.config.d = static_cast<int>(x.size());
  inst.config.k = 1;
  inst.config.M = 1;
  inst.config.n_contexts = 1;
  inst.config.n_actions = 2;
  inst.config.B_x = 2.0 * x.norm() + 1.0;
  inst.config.B_theta = theta.norm() + 1.0;
  inst.phi.resize(2, x.size());
  inst.phi.row(0) = x.transpose();
  inst.phi.row(1).setZero();
  inst.rho = Eigen::VectorXd::Ones(1);
  inst.B_true = theta.norm() > 0 ? Eigen::MatrixXd(theta.normalized())
                                 : Eigen::MatrixXd::Identity(x.size(), 1);
  inst.W_true = Eigen::MatrixXd::Constant(1, 1, theta.norm());
  inst.theta_true = {theta, theta};
  inst.nu_true = Eigen::VectorXd::Ones(1);
  return inst;
}

}  // namespace

TEST_CASE("generate_instance determinism and structural invariants") {
  const InstanceConfig cfg = small_config();
  const MultiTaskInstance a = generate_instance(cfg);
  const MultiTaskInstance b = generate_instance(cfg);
  CHECK(a.phi == b.phi);
  CHECK(a.B_true == b.B_true);
  CHECK(a.nu_true == b.nu_true);

  // Assumption-1 identities.
  for (int m = 0; m < cfg.M; ++m)
    CHECK((a.theta_true[m] - a.B_true * a.W_true.col(m)).norm() < 1e-12);
  Eigen::VectorXd combo = Eigen::VectorXd::Zero(cfg.d);
  for (int m = 0; m < cfg.M; ++m) combo += a.nu_true[m] * a.theta_true[m];
  CHECK((a.target_theta() - combo).norm() < 1e-10);

  // Norm bounds and distribution validity.
  for (const auto& th : a.theta_true) CHECK(th.norm() <= cfg.B_theta + 1e-12);
  for (int s = 0; s < cfg.n_contexts; ++s)
    for (int i = 0; i < cfg.n_actions; ++i)
      for (int j = i + 1; j < cfg.n_actions; ++j)
        CHECK(a.feature_diff(s, i, j).norm() <= cfg.B_x + 1e-12);
  CHECK(a.rho.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.rho.minCoeff() >= 0.0);

  // Orthonormal basis.
  CHECK((a.B_true.transpose() * a.B_true -
         Eigen::MatrixXd::Identity(cfg.k, cfg.k))
            .norm() < 1e-12);
}

TEST_CASE("single-source uniform profile collapses to the source parameter") {
  InstanceConfig cfg = small_config();
  cfg.M = 1;
  cfg.k = cfg.d;
  cfg.relevance.kind = RelevanceKind::kUniform;
  const MultiTaskInstance inst = generate_instance(cfg);
  CHECK(inst.nu_true.size() == 1);
  CHECK(inst.nu_true[0] == doctest::Approx(1.0));
  CHECK((inst.theta_true[1] - inst.theta_true[0]).norm() < 1e-12);
}

TEST_CASE("generated parameters have numerical rank k") {
  const InstanceConfig cfg = small_config();  // d=8, k=2, M=4
  const MultiTaskInstance inst = generate_instance(cfg);
  Eigen::MatrixXd stacked(cfg.d, cfg.M);
  for (int m = 0; m < cfg.M; ++m) stacked.col(m) = inst.theta_true[m];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked);
  CHECK(svd.singularValues()[1] > 1e-6);
  CHECK(svd.singularValues()[2] < 1e-10);
}

TEST_CASE("infeasible configs are rejected") {
  InstanceConfig cfg = small_config();
  cfg.k = cfg.d + 1;
  CHECK_THROWS_AS(generate_instance(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.n_actions = 1;
  CHECK_THROWS_AS(generate_instance(cfg), std::invalid_argument);
}

TEST_CASE("sample_dataset basics") {
  const MultiTaskInstance inst = generate_instance(small_config());
  const ComparisonDataset empty = sample_dataset(inst, 1, 0, 5);
  CHECK(empty.size() == 0);
  CHECK_THROWS_AS(sample_dataset(inst, 0, 10, 5), std::invalid_argument);
  CHECK_THROWS_AS(sample_dataset(inst, inst.config.M + 2, 10, 5),
                  std::invalid_argument);

  const ComparisonDataset data = sample_dataset(inst, 2, 500, 5);
  CHECK(data.size() == 500);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto [a1, a2] = data.action_pairs[i];
    const Eigen::VectorXd expected =
        inst.feature_diff(data.context_ids[i], a1, a2);
    CHECK((data.features.row(i).transpose() - expected).norm() == 0.0);
    CHECK((data.labels[i] == 0.0 || data.labels[i] == 1.0));
  }
  // Same seed, same data.
  const ComparisonDataset again = sample_dataset(inst, 2, 500, 5);
  CHECK(data.features == again.features);
  CHECK(data.labels == again.labels);
}

TEST_CASE("labels are balanced when the task parameter is zero") {
  Eigen::VectorXd x(3);
  x << 1.0, -0.5, 0.25;
  const MultiTaskInstance inst = tiny_instance(x, Eigen::VectorXd::Zero(3));
  const ComparisonDataset data = sample_dataset(inst, 2, 100000, 17);
  const double freq = data.labels.mean();
  const double sigma = 0.5 / std::sqrt(100000.0);
  CHECK(std::abs(freq - 0.5) <= 3.0 * sigma);
}

TEST_CASE("label frequency matches mu(x.theta) on a hand-built instance") {
  Eigen::VectorXd x(2), theta(2);
  x << 2.0, 0.0;
  theta << 1.0, 0.0;  // x.theta = 2
  const MultiTaskInstance inst = tiny_instance(x, theta);
  const double mu = sigmoid_link(2.0).mu;
  const int n = 100000;
  const ComparisonDataset data = sample_dataset(inst, 2, n, 23);
  const double sigma = std::sqrt(mu * (1.0 - mu) / n);
  CHECK(std::abs(data.labels.mean() - mu) <= 3.0 * sigma);
}

TEST_CASE("per-cell label frequencies pass a binomial check") {
  InstanceConfig cfg = small_config();
  cfg.n_contexts = 2;
  cfg.n_actions = 3;
  const MultiTaskInstance inst = generate_instance(cfg);
  const int task = 1;
  const ComparisonDataset data = sample_dataset(inst, task, 60000, 31);
  // Group by (context, pair) and compare to the model probability. The
  // 1e-4 significance corresponds to about 3.9 sigma two-sided.
  std::map<std::pair<int, std::pair<int, int>>, std::pair<int, int>> cells;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    auto& c = cells[{data.context_ids[i], data.action_pairs[i]}];
    c.first += data.labels[i] > 0.5 ? 1 : 0;
    ++c.second;
  }
  for (const auto& [key, counts] : cells) {
    if (counts.second < 1000) continue;
    const Eigen::VectorXd x =
        inst.feature_diff(key.first, key.second.first, key.second.second);
    const double mu = sigmoid_link(x.dot(inst.theta_true[task - 1])).mu;
    const double sigma = std::sqrt(mu * (1.0 - mu) / counts.second);
    const double freq = double(counts.first) / counts.second;
    CHECK(std::abs(freq - mu) <= 3.9 * sigma);
  }
}

TEST_CASE("min_l1_relevance on degenerate cases") {
  Eigen::VectorXd x(3), v(3);
  x << 1, 0, 0;
  v << 0.5, 1.0, -0.25;

  // Single source: nu = (1).
  const MultiTaskInstance single = tiny_instance(x, v);
  const Eigen::VectorXd nu1 = min_l1_relevance(single);
  CHECK(nu1.size() == 1);
  CHECK(nu1[0] == doctest::Approx(1.0).epsilon(1e-8));

  // Duplicate sources: the l1 objective is 1 for any split.
  MultiTaskInstance dup = tiny_instance(x, v);
  dup.config.M = 2;
  dup.theta_true = {v, v, v};
  dup.nu_true = Eigen::VectorXd::Constant(2, 0.5);
  const Eigen::VectorXd nu2 = min_l1_relevance(dup);
  CHECK(nu2.lpNorm<1>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((v * nu2.sum() - v).norm() < 1e-8);
}

TEST_CASE("min_l1_relevance matches a null-space grid oracle") {
  InstanceConfig cfg = small_config();
  cfg.d = 6;
  cfg.k = 2;
  cfg.M = 3;
  cfg.seed = 77;
  const MultiTaskInstance inst = generate_instance(cfg);
  const Eigen::VectorXd nu = min_l1_relevance(inst);

  Eigen::MatrixXd A(cfg.d, cfg.M);
  for (int m = 0; m < cfg.M; ++m) A.col(m) = inst.theta_true[m];
  CHECK((A * nu - inst.target_theta()).norm() < 1e-9);
  CHECK(nu.lpNorm<1>() <= inst.nu_true.lpNorm<1>() + 1e-6);

  // Brute force over the null-space parametrization nu_ls + Z c.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  const Eigen::VectorXd nu_ls = cod.solve(inst.target_theta());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-10 * svd.singularValues()[0]) ++rank;
  const Eigen::MatrixXd Z = svd.matrixV().rightCols(cfg.M - rank);
  REQUIRE(Z.cols() >= 1);
  double best = nu_ls.lpNorm<1>();
  // Coarse pass then refinement around the coarse optimum.
  auto scan = [&](double center, double halfwidth, int steps) {
    for (int i = 0; i <= steps; ++i) {
      const double c = center - halfwidth + 2.0 * halfwidth * i / steps;
      Eigen::VectorXd cand = nu_ls + Z.col(0) * c;
      if (Z.cols() > 1) continue;  // instance is built to have 1-dim slack
      best = std::min(best, cand.lpNorm<1>());
    }
  };
  scan(0.0, 20.0, 40000);
  CHECK(nu.lpNorm<1>() <= best + 1e-3);
  CHECK(nu.lpNorm<1>() >= best - 1e-3);
}

TEST_CASE("min_l1_relevance rejects targets outside the span") {
  Eigen::VectorXd x(3), v(3), w(3);
  x << 1, 0, 0;
  v << 1, 0, 0;
  w << 0, 1, 0;
  MultiTaskInstance inst = tiny_instance(x, v);
  inst.theta_true = {v, w};  // target w not in span{v}
  CHECK_THROWS_AS(min_l1_relevance(inst), std::runtime_error);
}

TEST_CASE("fisher_matrix one-atom design and PSD") {
  Eigen::VectorXd x(2), theta(2);
  x << 1.5, -0.5;
  theta << 0.4, 0.2;
  const MultiTaskInstance inst = tiny_instance(x, theta);
  const Eigen::MatrixXd E = fisher_matrix(inst, 2);
  const double w = sigmoid_link(x.dot(theta)).mu_prime;
  CHECK((E - w * x * x.transpose()).norm() < 1e-14);

  const MultiTaskInstance big = generate_instance(small_config());
  for (int task = 1; task <= big.config.M + 1; ++task) {
    const Eigen::MatrixXd Em = fisher_matrix(big, task);
    CHECK((Em - Em.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Em);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("fisher_matrix matches a Monte-Carlo estimate") {
  InstanceConfig cfg = small_config();
  cfg.d = 4;
  cfg.n_contexts = 3;
  cfg.n_actions = 3;
  const MultiTaskInstance inst = generate_instance(cfg);
  const int task = 1;
  const Eigen::MatrixXd E = fisher_matrix(inst, task);

  const int n = 1000000;
  const ComparisonDataset data = sample_dataset(inst, task, n, 3);
  Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(cfg.d, cfg.d);
  const Eigen::VectorXd t = data.features * inst.theta_true[task - 1];
  for (int i = 0; i < n; ++i)
    mc.noalias() += sigmoid_link(t[i]).mu_prime / n *
                    data.features.row(i).transpose() * data.features.row(i);
  CHECK((mc - E).operatorNorm() <= 5e-2 * E.operatorNorm());
}

TEST_CASE("representation_constant reference cases and oracle") {
  // Scalar case: |theta|_H = 2 with H = I and |theta| = 2.
  Eigen::VectorXd x(3), theta(3);
  x << 1, 0, 0;
  theta << 2, 0, 0;
  const MultiTaskInstance single = tiny_instance(x, theta);
  const Eigen::MatrixXd I3 = Eigen::MatrixXd::Identity(3, 3);
  CHECK(representation_constant(single, I3) == doctest::Approx(0.5).epsilon(1e-12));

  // H-orthonormal columns give exactly 1.
  MultiTaskInstance ortho = tiny_instance(x, theta);
  ortho.config.M = 2;
  Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0), e2 = Eigen::VectorXd::Unit(3, 1);
  ortho.theta_true = {e1, e2, e1};
  CHECK(representation_constant(ortho, I3) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(representation_constant(single, Eigen::MatrixXd::Zero(3, 3)),
                  std::invalid_argument);

  // Randomized oracle: C_theta upper-bounds (within tolerance) the max over
  // unit-H-norm span elements of the min-norm representing coefficient.
  InstanceConfig cfg = small_config();
  cfg.d = 6;
  cfg.M = 4;
  cfg.seed = 5;
  const MultiTaskInstance inst = generate_instance(cfg);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(6, 6) * 0.8;
  H(1, 1) = 2.0;
  const double c_theta = representation_constant(inst, H);

  Eigen::MatrixXd A(6, cfg.M);
  for (int m = 0; m < cfg.M; ++m) A.col(m) = inst.theta_true[m];
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXd c(cfg.M);
    for (int m = 0; m < cfg.M; ++m) c[m] = normal(rng);
    Eigen::VectorXd dir = A * c;
    const double hn = std::sqrt(dir.dot(H * dir));
    if (hn < 1e-12) continue;
    dir /= hn;
    worst = std::max(worst, cod.solve(dir).norm());
  }
  CHECK(worst <= c_theta * 1.01);
  CHECK(worst >= c_theta * 0.9);  // randomized lower bound approaches it
}

TEST_CASE("fisher diagnostics bracket one") {
  const MultiTaskInstance inst = generate_instance(small_config());
  const FisherDiagnostics diag = fisher_diagnostics(inst);
  CHECK(diag.C1 > 0.0);
  CHECK(diag.C1 <= 1.0 + 1e-9);
  CHECK(diag.C2 >= 1.0 - 1e-9);
  CHECK(std::isfinite(diag.C2));
  MESSAGE("assumption-3 diagnostics: C1=", diag.C1, " C2=", diag.C2);
}
