#include "pmsm_lpv/sdp_solver.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace pmsm_lpv {
namespace sdp {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd Unit(int n, int i, int j) {
  MatrixXd e = MatrixXd::Zero(n, n);
  e(i, j) = 1.0;
  e(j, i) = 1.0;
  return e;
}

GTEST_TEST(SdpSolver, LargestEigenvalue) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  MatrixXd a(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) a(i, j) = g(rng);
  a = 0.5 * (a + a.transpose()).eval();

  Problem problem;
  problem.num_vars = 1;
  problem.objective = VectorXd::Ones(1);
  LmiBlock block{"eig", a, {Term{{{0, -1.0}}, MatrixXd::Identity(6, 6)}}};
  problem.blocks.push_back(block);
  const Result r = Solve(problem);
  ASSERT_EQ(r.status, Status::kOptimal) << r.message;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(a);
  EXPECT_NEAR(r.x[0], eig.eigenvalues().maxCoeff(), 1e-7);
}

// min tr(P) s.t. AᵀP + PA + Q ⪯ 0 has the Lyapunov solution as its optimum.
GTEST_TEST(SdpSolver, LyapunovTraceMinimization) {
  const int n = 3;
  MatrixXd a(n, n);
  a << -1.0, 2.0, 0.0,
       -0.5, -3.0, 1.0,
        0.0, 0.3, -2.0;
  const MatrixXd q = MatrixXd::Identity(n, n);

  Problem problem;
  std::vector<std::pair<int, int>> index;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) index.emplace_back(i, j);
  problem.num_vars = static_cast<int>(index.size());
  problem.objective = VectorXd::Zero(problem.num_vars);
  LmiBlock lyap{"lyap", q, {}};
  for (int k = 0; k < problem.num_vars; ++k) {
    const auto [i, j] = index[k];
    const MatrixXd e = Unit(n, i, j);
    lyap.terms.push_back({{{k, 1.0}}, a.transpose() * e + e * a});
    if (i == j) problem.objective[k] = 1.0;
  }
  problem.blocks.push_back(lyap);
  const Result r = Solve(problem);
  ASSERT_EQ(r.status, Status::kOptimal) << r.message;

  // Oracle: solve the n² linear equations AᵀP + PA = −Q directly.
  MatrixXd lin(n * n, n * n);
  for (int c = 0; c < n * n; ++c) {
    MatrixXd e = MatrixXd::Zero(n, n);
    e(c % n, c / n) = 1.0;
    const MatrixXd img = a.transpose() * e + e * a;
    lin.col(c) = Eigen::Map<const VectorXd>(img.data(), n * n);
  }
  const VectorXd rhs = -Eigen::Map<const VectorXd>(q.data(), n * n);
  const VectorXd pvec = lin.fullPivLu().solve(rhs);
  const Eigen::Map<const MatrixXd> p(pvec.data(), n, n);
  EXPECT_NEAR(r.objective, p.trace(), 1e-6 * p.trace());
  for (int k = 0; k < problem.num_vars; ++k) {
    const auto [i, j] = index[k];
    EXPECT_NEAR(r.x[k], p(i, j), 1e-5 * p.norm());
  }
}

// Bounded real lemma for ẋ = −x + w, z = c·x: the optimal γ is |c|.
GTEST_TEST(SdpSolver, ScalarBoundedRealLemma) {
  for (double c : {1.0, 2.0}) {
    Problem problem;
    problem.num_vars = 2;  // (p, γ)
    problem.objective = VectorXd::Unit(2, 1);
    MatrixXd constant = MatrixXd::Zero(3, 3);
    constant(0, 2) = constant(2, 0) = c;
    MatrixXd tp(3, 3), tg = MatrixXd::Zero(3, 3);
    tp << -2, 1, 0, 1, 0, 0, 0, 0, 0;
    tg(1, 1) = tg(2, 2) = -1.0;
    problem.blocks.push_back({"brl", constant, {{{{0, 1.0}}, tp}, {{{1, 1.0}}, tg}}});
    problem.blocks.push_back(
        {"p>0", MatrixXd::Zero(1, 1), {{{{0, -1.0}}, MatrixXd::Ones(1, 1)}}});
    const Result r = Solve(problem);
    ASSERT_EQ(r.status, Status::kOptimal) << r.message;
    EXPECT_NEAR(r.x[1], c, 1e-6 * c);
  }
}

GTEST_TEST(SdpSolver, DetectsInfeasibility) {
  // x + 1 ⪯ 0 and 1 − x ⪯ 0 cannot both hold.
  Problem problem;
  problem.num_vars = 1;
  problem.objective = VectorXd::Zero(1);
  problem.blocks.push_back({"upper", MatrixXd::Ones(1, 1), {{{{0, 1.0}}, MatrixXd::Ones(1, 1)}}});
  problem.blocks.push_back({"lower", MatrixXd::Ones(1, 1), {{{{0, -1.0}}, MatrixXd::Ones(1, 1)}}});
  const Result r = Solve(problem);
  EXPECT_EQ(r.status, Status::kInfeasible) << r.message;
  ASSERT_EQ(r.block_max_eigenvalue.size(), 2u);
  EXPECT_GT(std::max(r.block_max_eigenvalue[0], r.block_max_eigenvalue[1]), 0.0);
}

GTEST_TEST(SdpSolver, DetectsInfeasibleMatrixLmi) {
  // P ⪰ I and AᵀP + PA ⪯ 0 with A unstable.
  const int n = 2;
  MatrixXd a(n, n);
  a << 0.5, 1.0, 0.0, -1.0;
  Problem problem;
  problem.num_vars = 3;
  problem.objective = VectorXd::Zero(3);
  LmiBlock lyap{"lyap", MatrixXd::Zero(n, n), {}};
  LmiBlock pos{"pos", MatrixXd::Identity(n, n), {}};
  const std::pair<int, int> idx[] = {{0, 0}, {0, 1}, {1, 1}};
  for (int k = 0; k < 3; ++k) {
    const MatrixXd e = Unit(n, idx[k].first, idx[k].second);
    lyap.terms.push_back({{{k, 1.0}}, a.transpose() * e + e * a});
    pos.terms.push_back({{{k, -1.0}}, e});
  }
  problem.blocks = {lyap, pos};
  const Result r = Solve(problem);
  EXPECT_EQ(r.status, Status::kInfeasible) << r.message;
}

GTEST_TEST(SdpSolver, SharedCoefficientsAcrossTerms) {
  // Term coefficients may mix variables: (x0 + x1)·I ⪰ 1 and x0, x1 ⪰ 0 with
  // objective 2 x0 + x1 gives x = (0, 1).
  Problem problem;
  problem.num_vars = 2;
  problem.objective = VectorXd(2);
  problem.objective << 2.0, 1.0;
  const MatrixXd one = MatrixXd::Ones(1, 1);
  problem.blocks.push_back({"sum", one, {{{{0, -1.0}, {1, -1.0}}, one}}});
  problem.blocks.push_back({"x0", MatrixXd::Zero(1, 1), {{{{0, -1.0}}, one}}});
  problem.blocks.push_back({"x1", MatrixXd::Zero(1, 1), {{{{1, -1.0}}, one}}});
  const Result r = Solve(problem);
  ASSERT_EQ(r.status, Status::kOptimal) << r.message;
  EXPECT_NEAR(r.x[0], 0.0, 1e-7);
  EXPECT_NEAR(r.x[1], 1.0, 1e-7);
}

GTEST_TEST(SdpSolver, FixesUnusedVariablesAtZero) {
  // Variable 1 enters no block; x0 ⪰ 2 with objective x0.
  Problem problem;
  problem.num_vars = 3;
  problem.objective = VectorXd::Unit(3, 0);
  const MatrixXd one = MatrixXd::Ones(1, 1);
  problem.blocks.push_back({"lower", 2.0 * one, {{{{0, -1.0}, {2, -1.0}}, one}}});
  problem.blocks.push_back({"x2", MatrixXd::Zero(1, 1), {{{{2, 1.0}, {1, 0.0}}, one}}});
  const Result r = Solve(problem);
  ASSERT_EQ(r.status, Status::kOptimal) << r.message;
  ASSERT_EQ(r.x.size(), 3);
  EXPECT_EQ(r.x[1], 0.0);
  EXPECT_NEAR(r.x[0] + r.x[2], 2.0, 1e-7);

  problem.objective[1] = 1.0;
  EXPECT_THROW(Solve(problem), std::invalid_argument);
}

GTEST_TEST(SdpSolver, RejectsMalformedProblems) {
  Problem problem;
  problem.num_vars = 1;
  problem.objective = VectorXd::Ones(1);
  EXPECT_THROW(Solve(problem), std::invalid_argument);
  problem.blocks.push_back({"bad", MatrixXd::Zero(2, 2), {{{{3, 1.0}}, MatrixXd::Identity(2, 2)}}});
  EXPECT_THROW(Solve(problem), std::invalid_argument);
  problem.blocks[0].terms[0].coefficients[0].first = 0;
  problem.blocks[0].terms[0].matrix = MatrixXd::Identity(3, 3);
  EXPECT_THROW(Solve(problem), std::invalid_argument);
}

}  // namespace
}  // namespace sdp
}  // namespace pmsm_lpv
