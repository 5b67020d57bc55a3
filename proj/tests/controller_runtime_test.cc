#include "pmsm_lpv/controller_runtime.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace pmsm_lpv {
namespace controller {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using lpv::GeneralizedPlant;
using lpv::SchedulingPoint;
using synthesis::DecisionValues;

MatrixXd Random(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

MatrixXd RandomSpd(std::mt19937_64& rng, int n, double shift) {
  const MatrixXd a = Random(rng, n, n);
  return a * a.transpose() + shift * MatrixXd::Identity(n, n);
}

// X ≻ Y⁻¹ makes [X I; I Y] positive definite.
std::pair<MatrixXd, MatrixXd> FeasiblePair(std::mt19937_64& rng, int n) {
  const MatrixXd y = RandomSpd(rng, n, 0.5);
  const MatrixXd x = y.inverse() + RandomSpd(rng, n, 0.1);
  return {x, y};
}

GeneralizedPlant ScalarPlant() {
  GeneralizedPlant g;
  g.A = MatrixXd::Constant(1, 1, -1.0);
  g.B1 = g.B2 = g.C1 = g.C2 = MatrixXd::Ones(1, 1);
  g.D11 = g.D12 = g.D21 = MatrixXd::Zero(1, 1);
  return g;
}

GeneralizedPlant RandomPlant(std::mt19937_64& rng, int n, int nw, int nu, int nz, int ny) {
  GeneralizedPlant g;
  g.A = Random(rng, n, n) - 2.0 * MatrixXd::Identity(n, n);
  g.B1 = Random(rng, n, nw);
  g.B2 = Random(rng, n, nu);
  g.C1 = Random(rng, nz, n);
  g.C2 = Random(rng, ny, n);
  g.D11 = MatrixXd::Zero(nz, nw);
  g.D12 = Random(rng, nz, nu, 0.3);
  g.D21 = Random(rng, ny, nw, 0.3);
  return g;
}

DecisionValues RandomValues(std::mt19937_64& rng, const GeneralizedPlant& g) {
  const auto [x, y] = FeasiblePair(rng, g.n());
  return {x, y, Random(rng, g.n(), g.n()), Random(rng, g.n(), g.ny()),
          Random(rng, g.nu(), g.n()), Random(rng, g.nu(), g.ny())};
}

double RelativeError(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// Brute-force H∞ norm: log-spaced sweep followed by golden-section
// refinement around the best sample.
double SweepHinfNorm(const ClosedLoopRealization& cl) {
  auto gain = [&cl](double w) {
    Eigen::MatrixXcd s = -cl.A.cast<std::complex<double>>();
    s.diagonal().array() += std::complex<double>(0.0, w);
    const Eigen::MatrixXcd g =
        cl.C.cast<std::complex<double>>() *
            s.fullPivLu().solve(cl.B.cast<std::complex<double>>()) +
        cl.D.cast<std::complex<double>>();
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(g).singularValues()(0);
  };
  double best = gain(0.0), best_lw = -6.0;
  const int samples = 20000;
  for (int i = 0; i <= samples; ++i) {
    const double lw = -6.0 + 12.0 * i / samples;
    const double v = gain(std::pow(10.0, lw));
    if (v > best) best = v, best_lw = lw;
  }
  double a = best_lw - 12.0 / samples, b = best_lw + 12.0 / samples;
  for (int it = 0; it < 100; ++it) {
    const double c = a + (b - a) / 3.0, d = b - (b - a) / 3.0;
    if (gain(std::pow(10.0, c)) > gain(std::pow(10.0, d))) b = d; else a = c;
  }
  return std::max(best, gain(std::pow(10.0, 0.5 * (a + b))));
}

// ---------------------------------------------------------------------------

GTEST_TEST(Factorize, Examples) {
  const MatrixXd x = 2.0 * MatrixXd::Identity(3, 3);
  const MatrixXd y = 0.25 * MatrixXd::Identity(3, 3);
  const Factorization f = Factorize(x, y);
  EXPECT_EQ(f.N, 0.5 * MatrixXd::Identity(3, 3));
  EXPECT_EQ(f.M, MatrixXd::Identity(3, 3));
  EXPECT_NEAR(f.condition, 1.0, 1e-15);

  const MatrixXd id = MatrixXd::Identity(2, 2);
  EXPECT_THROW(Factorize(id, id), ReconstructionError);
  EXPECT_THROW(Factorize(id, id, FactorizationMode::kBalanced), ReconstructionError);
  EXPECT_THROW(Factorize(id, MatrixXd::Identity(3, 3)), std::invalid_argument);
}

GTEST_TEST(Factorize, ResidualOnRandomFeasiblePairs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [x, y] = FeasiblePair(rng, 1 + trial % 5);
    const MatrixXd r = MatrixXd::Identity(x.rows(), x.cols()) - x * y;
    for (auto mode : {FactorizationMode::kDefault, FactorizationMode::kBalanced}) {
      const Factorization f = Factorize(x, y, mode);
      EXPECT_LT((f.N * f.M.transpose() - r).norm(), 1e-12 * r.norm());
      EXPECT_GT(std::abs(f.N.determinant()), 0.0);
      EXPECT_GT(std::abs(f.M.determinant()), 0.0);
    }
  }
}

GTEST_TEST(FactorizationMode, Names) {
  for (auto mode : {FactorizationMode::kDefault, FactorizationMode::kBalanced}) {
    EXPECT_EQ(FactorizationModeFromString(ToString(mode)), mode);
  }
  EXPECT_THROW(FactorizationModeFromString("cholesky"), std::invalid_argument);
}

GTEST_TEST(Reconstruct, ZeroControllerVariables) {
  std::mt19937_64 rng(2);
  const GeneralizedPlant g = RandomPlant(rng, 3, 1, 2, 4, 2);
  auto [x, y] = FeasiblePair(rng, 3);
  DecisionValues v{x, y, MatrixXd::Zero(3, 3), MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3),
                   MatrixXd::Zero(2, 2)};
  const ControllerMatrices k = Reconstruct(g, v);
  EXPECT_TRUE(k.D_K.isZero(0.0));
  EXPECT_TRUE(k.C_K.isZero(0.0));
  EXPECT_TRUE(k.B_K.isZero(0.0));
  const Factorization f = Factorize(x, y);
  const MatrixXd expected = -f.N.inverse() * x * g.A * y * f.M.transpose().inverse();
  EXPECT_LT(RelativeError(k.A_K, expected), 1e-12);
}

GTEST_TEST(Reconstruct, ScalarInstance) {
  // X = Y = 1.5: N = 1 − 2.25 = −1.25, M = 1, A_K = −N⁻¹·X·A·Y = −1.8.
  DecisionValues v{MatrixXd::Constant(1, 1, 1.5), MatrixXd::Constant(1, 1, 1.5),
                   MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1),
                   MatrixXd::Zero(1, 1)};
  const ControllerMatrices k = Reconstruct(ScalarPlant(), v);
  EXPECT_NEAR(k.A_K(0, 0), -1.8, 1e-15);
  EXPECT_EQ(k.B_K(0, 0), 0.0);
  EXPECT_EQ(k.C_K(0, 0), 0.0);
  EXPECT_EQ(k.D_K(0, 0), 0.0);
  const ClosedLoopRealization cl = ClosedLoop(ScalarPlant(), k);
  MatrixXd expected(2, 2);
  expected << -1.0, 0.0, 0.0, -1.8;
  EXPECT_LT((cl.A - expected).cwiseAbs().maxCoeff(), 1e-15);
}

GTEST_TEST(Reconstruct, ForwardChangeOfVariablesRoundTrip) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const GeneralizedPlant g = RandomPlant(rng, 1 + trial % 4, 1, 2, 3, 2);
    const DecisionValues v = RandomValues(rng, g);
    for (auto mode : {FactorizationMode::kDefault, FactorizationMode::kBalanced}) {
      const ControllerMatrices k = Reconstruct(g, v, mode);
      EXPECT_EQ(k.D_K, v.D_hat);
      const DecisionValues back =
          ForwardChangeOfVariables(g, k, v.X, v.Y, Factorize(v.X, v.Y, mode));
      EXPECT_LT(RelativeError(back.A_hat, v.A_hat), 1e-9);
      EXPECT_LT(RelativeError(back.B_hat, v.B_hat), 1e-9);
      EXPECT_LT(RelativeError(back.C_hat, v.C_hat), 1e-9);
      EXPECT_EQ(back.D_hat, v.D_hat);
    }
  }
}

GTEST_TEST(ClosedLoop, BlockStructure) {
  std::mt19937_64 rng(4);
  GeneralizedPlant g = RandomPlant(rng, 3, 2, 2, 4, 2);
  ControllerMatrices zero{Random(rng, 3, 3), MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 3),
                          MatrixXd::Zero(2, 2)};
  ClosedLoopRealization cl = ClosedLoop(g, zero);
  EXPECT_EQ(cl.A.topLeftCorner(3, 3), g.A);
  EXPECT_TRUE(cl.A.topRightCorner(3, 3).isZero(0.0));
  EXPECT_TRUE(cl.A.bottomLeftCorner(3, 3).isZero(0.0));
  EXPECT_EQ(cl.A.bottomRightCorner(3, 3), zero.A_K);
  EXPECT_EQ(cl.B.topRows(3), g.B1);
  EXPECT_TRUE(cl.B.bottomRows(3).isZero(0.0));

  g.D21.setZero();
  const ControllerMatrices k{Random(rng, 3, 3), Random(rng, 3, 2), Random(rng, 2, 3),
                             Random(rng, 2, 2)};
  cl = ClosedLoop(g, k);
  EXPECT_EQ(cl.B.topRows(3), g.B1);
  EXPECT_TRUE(cl.B.bottomRows(3).isZero(0.0));
  EXPECT_NEAR(cl.A.trace(), (g.A + g.B2 * k.D_K * g.C2).trace() + k.A_K.trace(), 1e-12);
  EXPECT_EQ(cl.D, g.D11 + g.D12 * k.D_K * g.D21);

  ControllerMatrices bad = k;
  bad.B_K = MatrixXd::Zero(3, 3);
  EXPECT_THROW(ClosedLoop(g, bad), std::invalid_argument);
}

// ---------------------------------------------------------------------------

ClosedLoopRealization FirstOrder(double c) {
  return {MatrixXd::Constant(1, 1, -1.0), MatrixXd::Ones(1, 1), MatrixXd::Constant(1, 1, c),
          MatrixXd::Zero(1, 1)};
}

GTEST_TEST(FrozenHinfNorm, FirstOrderExamples) {
  EXPECT_NEAR(FrozenHinfNorm(FirstOrder(1.0)), 1.0, 1e-9);
  EXPECT_NEAR(FrozenHinfNorm(FirstOrder(2.0)), 2.0, 2e-9);
}

GTEST_TEST(FrozenHinfNorm, RejectsUnstableSystems) {
  ClosedLoopRealization cl = FirstOrder(1.0);
  cl.A(0, 0) = 0.5;
  try {
    FrozenHinfNorm(cl);
    FAIL() << "expected UnstableError";
  } catch (const UnstableError& e) {
    EXPECT_EQ(e.eigenvalue().real(), 0.5);
    EXPECT_NE(std::string(e.what()).find("0.5"), std::string::npos);
  }
}

GTEST_TEST(FrozenHinfNorm, MatchesFrequencySweep) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    ClosedLoopRealization cl;
    // Lightly damped modes make the peaks sharp.
    cl.A = Random(rng, n, n, 2.0);
    Eigen::EigenSolver<MatrixXd> eig(cl.A);
    const double shift = eig.eigenvalues().real().maxCoeff() + 0.05 + 0.5 * (trial % 3);
    cl.A -= shift * MatrixXd::Identity(n, n);
    cl.B = Random(rng, n, 2);
    cl.C = Random(rng, 3, n);
    cl.D = trial % 2 == 0 ? MatrixXd(Random(rng, 3, 2, 0.5)) : MatrixXd(MatrixXd::Zero(3, 2));
    const double oracle = SweepHinfNorm(cl);
    const double norm = FrozenHinfNorm(cl, 1e-9);
    EXPECT_NEAR(norm, oracle, 1e-6 * oracle) << "trial " << trial;
    EXPECT_GE(norm, oracle * (1.0 - 1e-9));
  }
}

// A design on a frozen plant certifies its γ through the Bounded Real Lemma.
GTEST_TEST(FrozenHinfNorm, SynthesizedControllerRespectsGamma) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const GeneralizedPlant g = RandomPlant(rng, 2 + trial % 2, 1, 1, 2, 1);
    synthesis::SynthesisProblem problem;
    problem.plant = [g](const SchedulingPoint&) { return g; };
    problem.grid_mode = synthesis::GridMode::kBox;
    problem.counts = {1, 1, 1};
    problem.decision_bound = 1e3;
    const synthesis::SynthesisSolution sol = synthesis::Synthesize(problem);
    for (auto mode : {FactorizationMode::kDefault, FactorizationMode::kBalanced}) {
      const ClosedLoopRealization cl = ClosedLoop(g, Reconstruct(g, sol.At({}), mode));
      const double oracle = SweepHinfNorm(cl);
      EXPECT_LE(oracle, sol.gamma * (1.0 + 1e-6));
      EXPECT_NEAR(FrozenHinfNorm(cl), oracle, 1e-6 * oracle);
    }
  }
}

GTEST_TEST(FrozenHinfNorm, FactorizationModesGiveTheSameClosedLoop) {
  std::mt19937_64 rng(7);
  const GeneralizedPlant g = RandomPlant(rng, 3, 1, 2, 3, 2);
  synthesis::SynthesisProblem problem;
  problem.plant = [g](const SchedulingPoint&) { return g; };
  problem.grid_mode = synthesis::GridMode::kBox;
  problem.counts = {1, 1, 1};
  problem.decision_bound = 1e3;
  const synthesis::SynthesisSolution sol = synthesis::Synthesize(problem);
  const ControllerMatrices k1 = Reconstruct(g, sol.At({}), FactorizationMode::kDefault);
  const ControllerMatrices k2 = Reconstruct(g, sol.At({}), FactorizationMode::kBalanced);
  EXPECT_EQ(k1.D_K, k2.D_K);
  const ClosedLoopRealization a = ClosedLoop(g, k1), b = ClosedLoop(g, k2);
  // Parallel difference system a − b.
  const int na = static_cast<int>(a.A.rows());
  ClosedLoopRealization diff;
  diff.A = MatrixXd::Zero(2 * na, 2 * na);
  diff.A.topLeftCorner(na, na) = a.A;
  diff.A.bottomRightCorner(na, na) = b.A;
  diff.B.resize(2 * na, a.B.cols());
  diff.B << a.B, b.B;
  diff.C.resize(a.C.rows(), 2 * na);
  diff.C << a.C, -b.C;
  diff.D = a.D - b.D;
  EXPECT_LT(SweepHinfNorm(diff), 1e-8 * SweepHinfNorm(a));
}

// ---------------------------------------------------------------------------

synthesis::SynthesisSolution ConstantSolution(const DecisionValues& v) {
  synthesis::SynthesisSolution sol;
  sol.X = synthesis::AffineMatrixFunction::Constant(v.X);
  sol.Y = synthesis::AffineMatrixFunction::Constant(v.Y);
  sol.A_hat = synthesis::AffineMatrixFunction::Constant(v.A_hat);
  sol.B_hat = synthesis::AffineMatrixFunction::Constant(v.B_hat);
  sol.C_hat = synthesis::AffineMatrixFunction::Constant(v.C_hat);
  sol.D_hat = synthesis::AffineMatrixFunction::Constant(v.D_hat);
  sol.gamma = 1.0;
  return sol;
}

GTEST_TEST(ControllerRealization, ZeroInputKeepsZeroState) {
  std::mt19937_64 rng(8);
  const GeneralizedPlant g = RandomPlant(rng, 4, 1, 2, 6, 2);
  ControllerRealization k(ConstantSolution(RandomValues(rng, g)),
                          [g](const SchedulingPoint&) { return g; });
  EXPECT_EQ(k.order(), 4);
  for (int i = 0; i < 10; ++i) {
    const VectorXd u = k.Step(VectorXd::Zero(2), {0.1, 0.2, 50.0}, 1e-4);
    EXPECT_TRUE(u.isZero(0.0));
  }
  EXPECT_TRUE(k.state().isZero(0.0));
}

GTEST_TEST(ControllerRealization, OutputWithoutFeedthrough) {
  std::mt19937_64 rng(9);
  const GeneralizedPlant g = RandomPlant(rng, 3, 1, 2, 3, 2);
  DecisionValues v = RandomValues(rng, g);
  v.D_hat.setZero();
  ControllerRealization k(ConstantSolution(v), [g](const SchedulingPoint&) { return g; });
  const VectorXd x = Random(rng, 3, 1);
  const SchedulingPoint rho{};
  const VectorXd u1 = k.Output(x, Random(rng, 2, 1), rho);
  const VectorXd u2 = k.Output(x, Random(rng, 2, 1), rho);
  EXPECT_EQ(u1, u2);
}

GTEST_TEST(ControllerRealization, StepMatchesDerivativeAndOutput) {
  std::mt19937_64 rng(10);
  const GeneralizedPlant g = RandomPlant(rng, 3, 1, 2, 3, 2);
  ControllerRealization k(ConstantSolution(RandomValues(rng, g)),
                          [g](const SchedulingPoint&) { return g; });
  const VectorXd x0 = Random(rng, 3, 1);
  const VectorXd y = Random(rng, 2, 1);
  k.set_state(x0);
  const VectorXd u = k.Step(y, {}, 1e-3);
  EXPECT_EQ(u, k.Output(x0, y, {}));
  const VectorXd euler = x0 + 1e-3 * k.Derivative(x0, y, {});
  EXPECT_LT((k.state() - euler).norm(), 1e-3 * std::max(1.0, x0.norm()));
  EXPECT_THROW(k.set_state(VectorXd::Zero(2)), std::invalid_argument);
  EXPECT_THROW(k.Step(y, {}, 0.0), std::invalid_argument);
}

GTEST_TEST(ControllerRealization, StepHalvingShowsFourthOrder) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const GeneralizedPlant g = RandomPlant(rng, 3, 1, 2, 3, 2);
    ControllerRealization k(ConstantSolution(RandomValues(rng, g)),
                            [g](const SchedulingPoint&) { return g; });
    const VectorXd x0 = Random(rng, 3, 1);
    const VectorXd y = Random(rng, 2, 1);
    const double scale = k.MatricesAt({}).A_K.norm();
    // Local discrepancy between one step of h and two steps of h/2.
    auto discrepancy = [&](double h) {
      k.set_state(x0);
      k.Step(y, {}, h);
      const VectorXd full = k.state();
      k.set_state(x0);
      k.Step(y, {}, 0.5 * h);
      k.Step(y, {}, 0.5 * h);
      return (full - k.state()).norm();
    };
    const double h = 0.05 / scale;
    const double ratio = discrepancy(h) / discrepancy(0.5 * h);
    EXPECT_NEAR(std::log2(ratio), 5.0, 0.3) << "trial " << trial;
  }
}

GTEST_TEST(ControllerRealization, ScalingLeavesTheInputOutputMapUnchanged) {
  std::mt19937_64 rng(12);
  const GeneralizedPlant g = RandomPlant(rng, 4, 1, 2, 6, 2);
  synthesis::SynthesisSolution sol = ConstantSolution(RandomValues(rng, g));
  const PlantFactory plant = [g](const SchedulingPoint&) { return g; };
  const ClosedLoopRealization plain = ClosedLoop(g, Reconstruct(sol, plant, {}));
  sol.scaling.time_scale = 1000.0;
  sol.scaling.state_scale = Eigen::Vector4d(1000, 1, 4, 4);
  const ClosedLoopRealization scaled = ClosedLoop(g, Reconstruct(sol, plant, {}));
  for (double w : {0.0, 0.3, 2.0, 17.0, 400.0}) {
    EXPECT_NEAR(GainAt(scaled, w), GainAt(plain, w), 1e-9 * GainAt(plain, w));
  }
}

GTEST_TEST(ControllerRealization, InterpolationCache) {
  // Scheduled controller on a circle of radius 2 over a temperature range.
  std::mt19937_64 rng(13);
  const GeneralizedPlant g0 = RandomPlant(rng, 2, 1, 1, 2, 1);
  const MatrixXd a1 = Random(rng, 2, 2, 0.1), a2 = Random(rng, 2, 2, 0.1);
  const PlantFactory plant = [=](const SchedulingPoint& rho) {
    GeneralizedPlant g = g0;
    g.A += rho.rho1 * a1 + rho.rho2 * a2 + 0.001 * rho.rho3 * MatrixXd::Identity(2, 2);
    return g;
  };
  synthesis::SynthesisSolution sol = ConstantSolution(RandomValues(rng, g0));
  sol.A_hat.coefficients[1] = Random(rng, 2, 2, 0.1);
  sol.box.lower = {-2, -2, 20};
  sol.box.upper = {2, 2, 120};
  ControllerRealization k(sol, plant);
  auto radius = [](double) { return 2.0; };
  EXPECT_FALSE(k.interpolating());
  k.EnableInterpolation(64, 6, radius);
  EXPECT_TRUE(k.interpolating());
  // Exact at a cache node.
  const double a = 6.28318530717958647692 * 5 / 64;
  const SchedulingPoint node{2 * std::sin(a), 2 * std::cos(a), 40.0};
  const ControllerMatrices cached = k.MatricesAt(node);
  const ControllerMatrices exact = Reconstruct(sol, plant, node);
  EXPECT_LT(RelativeError(cached.A_K, exact.A_K), 1e-12);
  // Close between nodes.
  const SchedulingPoint mid{2 * std::sin(a + 0.03), 2 * std::cos(a + 0.03), 47.0};
  EXPECT_LT(RelativeError(k.MatricesAt(mid).A_K, Reconstruct(sol, plant, mid).A_K), 1e-2);
  k.DisableInterpolation();
  EXPECT_LT(RelativeError(k.MatricesAt(mid).A_K, Reconstruct(sol, plant, mid).A_K), 1e-15);
  EXPECT_THROW(k.EnableInterpolation(2, 6, radius), std::invalid_argument);
}

}  // namespace
}  // namespace controller
}  // namespace pmsm_lpv
