#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "luk/qp.hpp"
#include "support.hpp"

using namespace luk;
namespace lt = luk::testing;

TEST(QP, BoxProjection) {
  QPProblem p(3, 0);
  p.Q = MatrixXd::Identity(3, 3);
  p.c = -Eigen::Vector3d(1.3, -0.2, 0.5);
  p.l.setZero();
  p.u.setOnes();
  const QPSolution s = solve(p);
  ASSERT_EQ(s.status, QPStatus::Optimal);
  EXPECT_NEAR(s.z[0], 1.0, 1e-6);
  EXPECT_NEAR(s.z[1], 0.0, 1e-6);
  EXPECT_NEAR(s.z[2], 0.5, 1e-6);
}

TEST(QP, SingleRowMultiplier) {
  // min z^2 s.t. z >= 1.
  QPProblem p(1, 1);
  p.Q(0, 0) = 2.0;
  p.A(0, 0) = -1.0;
  p.b[0] = -1.0;
  const QPSolution s = solve(p);
  ASSERT_EQ(s.status, QPStatus::Optimal);
  EXPECT_NEAR(s.z[0], 1.0, 1e-6);
  EXPECT_NEAR(s.lambda[0], 2.0, 1e-5);
  EXPECT_LE(s.residuals.max(), 1e-6);
}

TEST(QP, PerturbedPointHasLargeResidual) {
  QPProblem p(1, 1);
  p.Q(0, 0) = 2.0;
  p.A(0, 0) = -1.0;
  p.b[0] = -1.0;
  QPSolution s = solve(p);
  ASSERT_EQ(s.status, QPStatus::Optimal);
  s.z[0] += 0.1;
  EXPECT_GE(kkt_residuals(p, s).max(), 0.05);
}

TEST(QP, ZeroProblem) {
  QPProblem p(2, 0);
  const QPSolution s = solve(p);
  ASSERT_EQ(s.status, QPStatus::Optimal);
  EXPECT_LE(s.z.lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_NEAR(s.objective, 0.0, 1e-9);
}

TEST(QP, FixedVariablesAreEliminated) {
  QPProblem p(2, 1);
  p.Q = MatrixXd::Identity(2, 2);
  p.l << 0.3, -kInf;
  p.u << 0.3, kInf;
  p.A << 1.0, 1.0;
  p.b << 0.0;
  const QPSolution s = solve(p);
  ASSERT_EQ(s.status, QPStatus::Optimal);
  EXPECT_DOUBLE_EQ(s.z[0], 0.3);
  EXPECT_NEAR(s.z[1], -0.3, 1e-6);
  EXPECT_LE(kkt_residuals(p, s).max(), 1e-6);
}

TEST(QP, MatchesActiveSetOracle) {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 60; ++t) {
    const Eigen::Index n = 2 + t % 4, m = t % 5;
    const QPProblem p = lt::random_qp(rng, n, m);
    const auto oracle = lt::active_set_oracle(p);
    ASSERT_TRUE(oracle.has_value());
    const QPSolution s = solve(p, {.tol = 1e-9});
    ASSERT_EQ(s.status, QPStatus::Optimal) << "case " << t;
    EXPECT_LE((s.z - oracle->z).lpNorm<Eigen::Infinity>(), 1e-5) << "case " << t;
    EXPECT_NEAR(s.objective, oracle->objective, 1e-6 * (1.0 + std::abs(oracle->objective)));
    EXPECT_LE(kkt_residuals(p, s).max(), 1e-7);
  }
}

TEST(QP, ReportedResidualsAreExact) {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 20; ++t) {
    const QPProblem p = lt::random_qp(rng, 5, 4);
    const QPSolution s = solve(p);
    const KKTResiduals r = kkt_residuals(p, s);
    EXPECT_DOUBLE_EQ(r.stationarity, s.residuals.stationarity);
    EXPECT_DOUBLE_EQ(r.primal, s.residuals.primal);
    EXPECT_DOUBLE_EQ(r.complementarity, s.residuals.complementarity);
  }
}

TEST(QP, ComplementarityGapIsNonincreasing) {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 30; ++t) {
    const QPProblem p = lt::random_qp(rng, 6, 5);
    const QPSolution s = solve(p);
    ASSERT_EQ(s.status, QPStatus::Optimal);
    ASSERT_FALSE(s.gap_history.empty());
    for (std::size_t k = 1; k < s.gap_history.size(); ++k)
      EXPECT_LE(s.gap_history[k], s.gap_history[k - 1] * (1 + 1e-12)) << "iteration " << k;
  }
}

TEST(QP, RowPermutationInvariance) {
  std::mt19937_64 rng(54);
  for (int t = 0; t < 20; ++t) {
    const QPProblem p = lt::random_qp(rng, 5, 6);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    QPProblem q = p;
    for (int i = 0; i < 6; ++i) {
      q.A.row(i) = p.A.row(perm[i]);
      q.b[i] = p.b[perm[i]];
    }
    const QPSolution a = solve(p), b = solve(q);
    ASSERT_EQ(a.status, QPStatus::Optimal);
    ASSERT_EQ(b.status, QPStatus::Optimal);
    EXPECT_LE((a.z - b.z).lpNorm<Eigen::Infinity>(), 1e-5);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(b.lambda[i], a.lambda[perm[i]], 1e-4);
  }
}

TEST(QP, InfeasibleRowsDetected) {
  // z >= 1 and z <= 0.
  QPProblem p(1, 2);
  p.Q(0, 0) = 1.0;
  p.A << -1.0, 1.0;
  p.b << -1.0, 0.0;
  EXPECT_EQ(solve(p).status, QPStatus::Infeasible);
}

TEST(QP, CrossedBoundsDetected) {
  QPProblem p(1, 0);
  p.l[0] = 1.0;
  p.u[0] = 0.0;
  EXPECT_EQ(solve(p).status, QPStatus::Infeasible);
}

TEST(QP, NonPsdRejected) {
  QPProblem p(2, 0);
  p.Q << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(solve(p), SolverError);
}

TEST(QP, BadInputsRejected) {
  QPProblem p(2, 1);
  p.b.resize(2);
  EXPECT_THROW(solve(p), std::invalid_argument);
  QPProblem q(1, 0);
  EXPECT_THROW(solve(q, {.tol = 0.0}), std::invalid_argument);
  q.l[0] = std::nan("");
  EXPECT_THROW(solve(q), std::invalid_argument);
}

TEST(QP, IterationCapGivesNotConverged) {
  std::mt19937_64 rng(55);
  const QPProblem p = lt::random_qp(rng, 6, 5);
  EXPECT_EQ(solve(p, {.tol = 1e-9, .max_iter = 1}).status, QPStatus::NotConverged);
}

TEST(QP, JsonRoundTrip) {
  std::mt19937_64 rng(56);
  const QPProblem p = lt::random_qp(rng, 4, 3);
  const QPProblem q = problem_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(p.Q, q.Q);
  EXPECT_EQ(p.c, q.c);
  EXPECT_EQ(p.A, q.A);
  EXPECT_EQ(p.b, q.b);
  EXPECT_EQ(p.l, q.l);
  EXPECT_EQ(p.u, q.u);
  const auto js = to_json(solve(p));
  EXPECT_EQ(js.at("status"), "optimal");
  EXPECT_EQ(js.at("z").size(), 4u);
}
