// Acceptance checks for the synthesis, runtime and simulation pipeline. Prints
// one PASS or FAIL line per criterion and exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmsm_lpv/config.h"
#include "pmsm_lpv/controller_runtime.h"
#include "pmsm_lpv/lmi_synthesis.h"
#include "pmsm_lpv/lpv_model.h"
#include "pmsm_lpv/motor_model.h"
#include "pmsm_lpv/simulation.h"

namespace pmsm_lpv {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using lpv::GeneralizedPlant;
using lpv::SchedulingPoint;
using synthesis::DecisionValues;
using synthesis::RateVector;
using synthesis::SynthesisSolution;

struct Outcome {
  bool passed{false};
  std::string detail;
};

std::string Format(const char* fmt, double a = 0, double b = 0, double c = 0,
                   double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

double MaxEig(const MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (m + m.transpose()))
      .eigenvalues()
      .maxCoeff();
}

double MaxRealPart(const MatrixXd& a) {
  return Eigen::EigenSolver<MatrixXd>(a, false).eigenvalues().real().maxCoeff();
}

// Shared designs, computed once.
struct Designs {
  config::ToolkitConfig config;
  SynthesisSolution nominal;
  double nominal_seconds{0.0};
  std::optional<SynthesisSolution> robust;
  std::string robust_error;
};

Designs& Shared() {
  static Designs d = [] {
    Designs out;
    const auto start = std::chrono::steady_clock::now();
    out.nominal = synthesis::Synthesize(config::MakeProblem(out.config, false));
    out.nominal_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      out.robust = synthesis::Synthesize(config::MakeProblem(out.config, true));
    } catch (const std::exception& e) {
      out.robust_error = e.what();
    }
    return out;
  }();
  return d;
}

const SynthesisSolution& Robust() {
  const Designs& d = Shared();
  if (!d.robust) throw std::runtime_error("robust synthesis failed: " + d.robust_error);
  return *d.robust;
}

std::vector<RateVector> Rates(const SynthesisSolution& s) {
  return synthesis::RateVertices(s.box);
}

// ---------------------------------------------------------------------------

Outcome SynthesisFeasibility() {
  const Designs& d = Shared();
  const SynthesisSolution& s = d.nominal;
  const auto plant = config::Plant(d.config);
  const auto problem = config::MakeProblem(d.config, false);
  const auto train = synthesis::VerifySolution(s, plant, problem.Grid(), Rates(s),
                                               s.lmi_margin);
  const auto verify = synthesis::VerifySolution(
      s, plant, problem.Grid(d.config.synthesis.verify_counts), Rates(s));
  const double train_worst = std::min(
      {train.worst_performance, train.worst_coupling, train.worst_pole_region});
  const double verify_worst = std::min(
      {verify.worst_performance, verify.worst_coupling, verify.worst_pole_region});
  Outcome o;
  o.passed = std::isfinite(s.gamma) && s.gamma > 0.0 && train.passed &&
             d.nominal_seconds < 300.0 && verify.passed &&
             problem.counts == std::array<int, 3>{5, 5, 3} &&
             d.config.synthesis.verify_counts == std::array<int, 3>{9, 9, 5};
  o.detail = Format("gamma=%.6g, training margin=%.3g, 9x9x5 margin=%.3g, time=%.1fs",
                    s.gamma, train_worst, verify_worst, d.nominal_seconds);
  return o;
}

// H∞ norm by bisection on the Hamiltonian imaginary-axis test. Returns an
// upper bound within relative `tol` of the norm.
bool HasImaginaryEigenvalue(const controller::ClosedLoopRealization& cl, double g) {
  const MatrixXd& a = cl.A;
  const MatrixXd& b = cl.B;
  const MatrixXd& c = cl.C;
  const MatrixXd& dd = cl.D;
  const int n = static_cast<int>(a.rows());
  const MatrixXd r = g * g * MatrixXd::Identity(dd.cols(), dd.cols()) - dd.transpose() * dd;
  const MatrixXd s = g * g * MatrixXd::Identity(dd.rows(), dd.rows()) - dd * dd.transpose();
  const MatrixXd ri = r.inverse();
  const MatrixXd si = s.inverse();
  const MatrixXd a0 = a + b * ri * dd.transpose() * c;
  MatrixXd h(2 * n, 2 * n);
  h << a0, g * b * ri * b.transpose(), -g * c.transpose() * si * c, -a0.transpose();
  const Eigen::VectorXcd ev = Eigen::EigenSolver<MatrixXd>(h, false).eigenvalues();
  const double scale = h.norm();
  for (const std::complex<double>& l : ev) {
    if (std::abs(l.real()) <= 1e-10 * scale + 1e-9 * std::abs(l)) return true;
  }
  return false;
}

double BisectionHinfNorm(const controller::ClosedLoopRealization& cl, double tol) {
  double lower = cl.D.size() ? Eigen::JacobiSVD<MatrixXd>(cl.D).singularValues()(0) : 0.0;
  for (double w = 1e-3; w < 1e8; w *= 1.05) lower = std::max(lower, controller::GainAt(cl, w));
  lower = std::max(lower, controller::GainAt(cl, 0.0));
  double upper = std::max(2.0 * lower, 1e-12);
  while (HasImaginaryEigenvalue(cl, upper)) upper *= 2.0;
  while (upper - lower > tol * upper) {
    const double mid = 0.5 * (lower + upper);
    if (HasImaginaryEigenvalue(cl, mid)) {
      lower = mid;
    } else {
      upper = mid;
    }
  }
  return upper;
}

Outcome FrozenCertificate() {
  const Designs& d = Shared();
  const SynthesisSolution& s = d.nominal;
  const auto plant = config::Plant(d.config);
  const auto points = config::MakeProblem(d.config, false).Grid();
  double worst_ratio = 0.0, worst_pole = -std::numeric_limits<double>::infinity();
  bool ok = true;
  for (const SchedulingPoint& rho : points) {
    const auto k = controller::Reconstruct(s, plant, rho);
    const auto cl = controller::ClosedLoop(plant(rho), k);
    const double pole = MaxRealPart(cl.A);
    worst_pole = std::max(worst_pole, pole);
    if (pole >= 0.0) {
      ok = false;
      continue;
    }
    const double norm = BisectionHinfNorm(cl, 1e-9);
    worst_ratio = std::max(worst_ratio, norm / s.gamma);
    if (norm > s.gamma * (1.0 + 1e-6)) ok = false;
  }
  return {ok, Format("%.0f points, max Re(pole)=%.4g, max norm/gamma=%.6f",
                     static_cast<double>(points.size()), worst_pole, worst_ratio)};
}

// Substitutes random Δ with ‖Δ‖ ≤ 1 into the nominal condition of the robust
// solution, in the solver's coordinates.
Outcome RobustOracle() {
  const Designs& d = Shared();
  const SynthesisSolution& s = Robust();
  if (!s.robust) return {false, "solution carries no uncertainty"};
  const synthesis::Scaling& scaling = s.scaling;
  const double w0 = scaling.time_scale;
  const synthesis::RobustData rd = synthesis::ScaleRobustData(*s.robust, scaling);
  const auto plant = config::Plant(d.config);
  const auto points = config::MakeProblem(d.config, true).Grid();
  const auto rates = Rates(s);

  std::mt19937 rng(20240611);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  const int samples = 100;
  for (int k = 0; k < samples; ++k) {
    MatrixXd delta(rd.H.cols(), rd.E1.rows());
    for (int i = 0; i < delta.size(); ++i) delta(i) = normal(rng);
    const double sv = Eigen::JacobiSVD<MatrixXd>(delta).singularValues()(0);
    delta *= (k < 25 ? 1.0 : unit(rng)) / sv;
    for (const SchedulingPoint& rho : points) {
      GeneralizedPlant g = synthesis::ScalePlant(plant(rho), scaling);
      g.A += rd.H * delta * rd.E1;
      g.B2 += rd.H * delta * rd.E2;
      const DecisionValues v = synthesis::ScaleDecisionValues(s.At(rho), scaling);
      for (const RateVector& rate : rates) {
        DecisionValues dot = s.At(rho);
        dot.X = synthesis::LyapunovRateTerm(s.X, rate);
        dot.Y = synthesis::LyapunovRateTerm(s.Y, rate);
        const DecisionValues dot_scaled = synthesis::ScaleDecisionValues(dot, scaling);
        const MatrixXd xd = dot_scaled.X / w0;
        const MatrixXd yd = dot_scaled.Y / w0;
        worst = std::max(worst, MaxEig(synthesis::AssembleNominalLmi(g, v, xd, yd, s.gamma)));
      }
    }
  }
  return {worst < 0.0,
          Format("%.0f samples x %.0f points x %.0f rates, max eigenvalue=%.4g",
                 samples, static_cast<double>(points.size()),
                 static_cast<double>(rates.size()), worst)};
}

Outcome ScalarInstance() {
  GeneralizedPlant p;
  p.A = MatrixXd::Constant(1, 1, -1.0);
  p.B1 = p.B2 = p.C1 = p.C2 = MatrixXd::Ones(1, 1);
  p.D11 = p.D12 = p.D21 = MatrixXd::Zero(1, 1);
  DecisionValues v;
  v.X = v.Y = MatrixXd::Ones(1, 1);
  v.A_hat = v.B_hat = v.C_hat = v.D_hat = MatrixXd::Zero(1, 1);
  const MatrixXd zero = MatrixXd::Zero(1, 1);
  const MatrixXd m = synthesis::AssembleNominalLmi(p, v, zero, zero, 2.0);
  // Blocks by hand: XA + AᵀX = −2, AY + YAᵀ = −2, Âᵀ + A = −1,
  // XB1 = B1 = 1, C1 = C1Y = 1, D11 = 0, −γ = −2.
  MatrixXd expected(4, 4);
  expected << -2, -1, 1, 1,
              -1, -2, 1, 1,
               1,  1, -2, 0,
               1,  1, 0, -2;
  const bool exact = m == expected;
  const double lmax = MaxEig(m);

  DecisionValues strict = v;
  strict.X = strict.Y = MatrixXd::Constant(1, 1, 1.5);
  const double coupling_min =
      Eigen::SelfAdjointEigenSolver<MatrixXd>(synthesis::AssembleCouplingLmi(strict.X, strict.Y))
          .eigenvalues()
          .minCoeff();
  const auto k = controller::Reconstruct(p, strict);
  // N = 1 − XY = −1.25, A_K = N⁻¹(Â − XAY) = −1.8, B_K = C_K = D_K = 0.
  const bool controller_ok = std::abs(k.A_K(0, 0) + 1.8) < 1e-12 && k.B_K.isZero(0.0) &&
                             k.C_K.isZero(0.0) && k.D_K.isZero(0.0);
  const double pole = MaxRealPart(controller::ClosedLoop(p, k).A);
  return {exact && lmax < 0.0 && coupling_min > 0.0 && controller_ok && pole < 0.0,
          Format("entries exact=%.0f, max eigenvalue=%.6f, A_K=%.6f, max Re(pole)=%.3f",
                 exact ? 1.0 : 0.0, lmax, k.A_K(0, 0), pole)};
}

Outcome PassivityInvariant() {
  const motor::MotorParams params;
  const double omega0 = 300.0 * motor::kRpmToRadPerSec;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0.0;
  int checks = 0;
  for (const double temperature : {30.0, 75.0, 130.0}) {
    for (int trial = 0; trial < 4; ++trial) {
      motor::ErrorState e{unit(rng), 20.0 * unit(rng), 5.0 * unit(rng), 5.0 * unit(rng)};
      const auto f = [&](const motor::ErrorState& x, double t) {
        return motor::ErrorDerivative(x, omega0 * t, 0.0, 0.0, 0.0, temperature, params);
      };
      const auto axpy = [](const motor::ErrorState& x, double a, const motor::ErrorState& k) {
        return motor::ErrorState{x.e_z + a * k.e_z, x.e_omega + a * k.e_omega,
                                 x.e_alpha + a * k.e_alpha, x.e_beta + a * k.e_beta};
      };
      const double h = 1e-5;
      for (int step = 0; step < 2000; ++step) {
        const double t = step * h;
        const motor::ErrorState de = f(e, t);
        const double gradient = 2.0 * params.inertia * e.e_omega * de.e_omega +
                                3.0 * params.stator_inductance *
                                    (e.e_alpha * de.e_alpha + e.e_beta * de.e_beta);
        const double formula =
            -2.0 * params.friction * e.e_omega * e.e_omega -
            3.0 * motor::ResistanceAt(params, temperature) *
                (e.e_alpha * e.e_alpha + e.e_beta * e.e_beta);
        if (formula != 0.0) {
          worst = std::max(worst, std::abs(gradient - formula) / std::abs(formula));
          ++checks;
        }
        const motor::ErrorState k1 = de;
        const motor::ErrorState k2 = f(axpy(e, h / 2, k1), t + h / 2);
        const motor::ErrorState k3 = f(axpy(e, h / 2, k2), t + h / 2);
        const motor::ErrorState k4 = f(axpy(e, h, k3), t + h);
        e = axpy(axpy(axpy(axpy(e, h / 6, k1), h / 3, k2), h / 3, k3), h / 6, k4);
      }
    }
  }
  return {worst <= 1e-8 && checks > 0,
          Format("%.0f states, max relative mismatch=%.3g", checks, worst)};
}

// ---------------------------------------------------------------------------

simulation::SimTrace RunLpv(const simulation::Scenario& scenario,
                            const SynthesisSolution& s, bool robust) {
  const Designs& d = Shared();
  const auto artifact = config::MakeArtifact(d.config, robust, s);
  const auto k = config::MakeController(artifact, d.config);
  return simulation::SimulateLpv(scenario, *k, d.config.motor);
}

simulation::SimTrace RunPi(const simulation::Scenario& scenario) {
  const Designs& d = Shared();
  return simulation::SimulateFocPi(scenario, d.config.pi, d.config.motor);
}

Outcome Tracking() {
  const auto& scenario = config::FindScenario(Shared().config, "step-nodist");
  const auto lpv = simulation::ComputeMetrics(RunLpv(scenario, Shared().nominal, false));
  const auto pi = simulation::ComputeMetrics(RunPi(scenario));
  if (lpv.steps.size() != 2 || pi.steps.size() != 2) return {false, "expected two steps"};
  bool ok = true;
  std::ostringstream detail;
  for (int i = 0; i < 2; ++i) {
    const auto& a = lpv.steps[i];
    const auto& b = pi.steps[i];
    ok = ok && a.steady_state_error_rpm < 1.0 && a.overshoot_percent <= b.overshoot_percent &&
         a.settled && b.settled && a.settling_time <= b.settling_time;
    detail << (i ? "; " : "")
           << Format("step %.0f: ss=%.3g rpm, overshoot %.3g%% vs %.3g%%", i + 1,
                     a.steady_state_error_rpm, a.overshoot_percent, b.overshoot_percent)
           << Format(", settling %.4gs vs %.4gs", a.settling_time, b.settling_time);
  }
  return {ok, detail.str()};
}

Outcome DisturbanceRejection() {
  const auto& scenario = config::FindScenario(Shared().config, "disturbance");
  const auto lpv = simulation::ComputeMetrics(RunLpv(scenario, Shared().nominal, false));
  const auto pi = simulation::ComputeMetrics(RunPi(scenario));
  if (lpv.disturbances.empty() || lpv.disturbances.size() != pi.disturbances.size())
    return {false, "load events missing"};
  bool ok = true;
  std::ostringstream detail;
  for (size_t i = 0; i < lpv.disturbances.size(); ++i) {
    const auto& a = lpv.disturbances[i];
    const auto& b = pi.disturbances[i];
    ok = ok && a.peak_deviation_rpm < b.peak_deviation_rpm && a.itae < b.itae;
    detail << (i ? "; " : "")
           << Format("load at %.2gs: peak %.4g vs %.4g rpm", a.start, a.peak_deviation_rpm,
                     b.peak_deviation_rpm)
           << Format(", ITAE %.3g vs %.3g", a.itae, b.itae);
  }
  return {ok, detail.str()};
}

Outcome Robustness() {
  const auto& scenario = config::FindScenario(Shared().config, "perturbed");
  const auto nominal = RunLpv(scenario, Shared().nominal, false);
  const auto robust = RunLpv(scenario, Robust(), true);
  if (nominal.divergent || robust.divergent) return {false, "a controller diverged"};
  const auto mn = simulation::ComputeMetrics(nominal);
  const auto mr = simulation::ComputeMetrics(robust);
  return {mr.itae < mn.itae && mr.peak_overshoot_percent < mn.peak_overshoot_percent,
          Format("ITAE robust=%.4g nominal=%.4g, overshoot robust=%.4g%% nominal=%.4g%%",
                 mr.itae, mn.itae, mr.peak_overshoot_percent, mn.peak_overshoot_percent)};
}

Outcome TemperatureMaps() {
  const motor::MotorParams p;
  const bool anchors = motor::ResistanceAt(p, 75.0) == p.stator_resistance_ref &&
                       motor::FluxAt(p, 30.0) == p.flux_ref;
  const double eps = std::numeric_limits<double>::epsilon();
  double worst = 0.0;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> temp(motor::kMinTemperature, motor::kMaxTemperature);
  const double r0 = motor::ResistanceAt(p, 0.0), r1 = motor::ResistanceAt(p, 100.0);
  const double l0 = motor::FluxAt(p, 0.0), l1 = motor::FluxAt(p, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double t = temp(rng);
    const double r = motor::ResistanceAt(p, t), l = motor::FluxAt(p, t);
    worst = std::max(worst, std::abs(r - (r0 + (r1 - r0) * t / 100.0)) / (eps * std::abs(r)));
    worst = std::max(worst, std::abs(l - (l0 + (l1 - l0) * t / 100.0)) / (eps * std::abs(l)));
  }
  return {anchors && worst <= 16.0,
          Format("anchors exact=%.0f, max affinity deviation=%.2f ulp", anchors ? 1.0 : 0.0,
                 worst)};
}

// ---------------------------------------------------------------------------

simulation::Scenario ConvergenceScenario(double step) {
  simulation::Scenario s = config::FindScenario(Shared().config, "perturbed");
  s.name = "convergence";
  s.duration = 0.6;
  std::erase_if(s.reference.steps, [&](const auto& e) { return e.time >= s.duration; });
  std::erase_if(s.load.steps, [&](const auto& e) { return e.time >= s.duration; });
  const double t_end = s.temperature.At(s.duration);
  std::erase_if(s.temperature.points, [&](const auto& e) { return e.time >= s.duration; });
  s.temperature.points.push_back({s.duration, t_end});
  s.step = step;
  s.decimation = static_cast<int>(std::lround(1e-3 / step));
  return s;
}

double TraceDistance(const simulation::SimTrace& a, const simulation::SimTrace& b) {
  if (a.samples.size() != b.samples.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    d = std::max({d, std::abs(x.state.omega - y.state.omega),
                  std::abs(x.state.i_alpha - y.state.i_alpha),
                  std::abs(x.state.i_beta - y.state.i_beta),
                  std::abs(x.state.theta - y.state.theta)});
  }
  return d;
}

Outcome Numerics() {
  const Designs& d = Shared();
  std::vector<simulation::SimTrace> runs;
  for (const double h : {1e-5, 5e-6, 2.5e-6}) {
    runs.push_back(RunLpv(ConvergenceScenario(h), d.nominal, false));
  }
  const double e1 = TraceDistance(runs[0], runs[1]);
  const double e2 = TraceDistance(runs[1], runs[2]);
  const double order = std::log2(e1 / e2);
  const bool convergence = std::abs(order - 4.0) <= 0.3;

  const auto& step = config::FindScenario(d.config, "step-nodist");
  const std::string first = simulation::TraceToCsv(RunLpv(step, d.nominal, false));
  const std::string second = simulation::TraceToCsv(RunLpv(step, d.nominal, false));
  const bool reproducible = first == second;

  std::vector<double> gammas;
  for (const std::array<int, 3>& counts :
       {std::array<int, 3>{2, 2, 2}, {4, 2, 3}, {4, 4, 5}}) {
    config::ToolkitConfig c = d.config;
    c.synthesis.counts = counts;
    gammas.push_back(synthesis::Synthesize(config::MakeProblem(c, false)).gamma_optimal);
  }
  bool monotone = true;
  for (size_t i = 1; i < gammas.size(); ++i)
    monotone = monotone && gammas[i] >= gammas[i - 1] * (1.0 - 1e-6);

  std::ostringstream detail;
  detail << Format("step halving order=%.3f (%.3g, %.3g)", order, e1, e2)
         << ", identical traces=" << (reproducible ? "yes" : "no")
         << Format(", gamma over nested grids %.6g, %.6g, %.6g", gammas[0], gammas[1],
                   gammas[2]);
  return {convergence && reproducible && monotone, detail.str()};
}

}  // namespace
}  // namespace pmsm_lpv

int main() {
  using pmsm_lpv::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"synthesis feasibility", pmsm_lpv::SynthesisFeasibility},
      {"frozen-parameter certificate", pmsm_lpv::FrozenCertificate},
      {"robust LMI oracle", pmsm_lpv::RobustOracle},
      {"scalar instance", pmsm_lpv::ScalarInstance},
      {"passivity invariant", pmsm_lpv::PassivityInvariant},
      {"tracking", pmsm_lpv::Tracking},
      {"disturbance rejection", pmsm_lpv::DisturbanceRejection},
      {"robustness", pmsm_lpv::Robustness},
      {"temperature maps", pmsm_lpv::TemperatureMaps},
      {"numerics", pmsm_lpv::Numerics},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("%s %zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
