#include "pmsm_lpv/lpv_model.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pmsm_lpv {
namespace lpv {

using motor::LoadChannel;
using motor::MotorParams;

bool ParameterBox::Contains(const SchedulingPoint& rho, double tol) const {
  const auto r = rho.AsArray();
  for (int i = 0; i < kNumParams; ++i) {
    const double slack = tol * std::max(1.0, std::abs(upper[i] - lower[i]));
    if (r[i] < lower[i] - slack || r[i] > upper[i] + slack) return false;
  }
  return true;
}

void ParameterBox::Validate() const {
  for (int i = 0; i < kNumParams; ++i) {
    if (!(lower[i] <= upper[i])) {
      std::ostringstream msg;
      msg << "parameter box axis " << i << " has lower bound " << lower[i]
          << " above upper bound " << upper[i];
      throw std::invalid_argument(msg.str());
    }
    if (!(rate[i] >= 0.0) || !std::isfinite(rate[i])) {
      throw std::invalid_argument("rate bounds must be finite and >= 0");
    }
  }
}

void PerformanceWeights::Validate() const {
  const double w[] = {phi, sigma, xi, psi, eta, mu};
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("performance weights must be >= 0");
    }
  }
  if (!(phi > 0 || sigma > 0 || xi > 0 || psi > 0)) {
    throw std::invalid_argument("at least one state weight must be positive");
  }
  if (!(eta > 0 || mu > 0)) {
    throw std::invalid_argument("at least one input weight must be positive");
  }
}

void GeneralizedPlant::CheckDimensions() const {
  const int n_ = n();
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (A.cols() != n_) fail("A must be square");
  if (B1.rows() != n_) fail("B1 rows must match A");
  if (B2.rows() != n_) fail("B2 rows must match A");
  if (C1.cols() != n_) fail("C1 columns must match A");
  if (C2.cols() != n_) fail("C2 columns must match A");
  if (D11.rows() != nz() || D11.cols() != nw()) fail("D11 shape mismatch");
  if (D12.rows() != nz() || D12.cols() != nu()) fail("D12 shape mismatch");
  if (D21.rows() != ny() || D21.cols() != nw()) fail("D21 shape mismatch");
}

SchedulingPoint SchedulingFromUnchecked(double theta, double temperature,
                                        const MotorParams& params) {
  const double p = params.pole_pairs;
  const double radius = p * motor::FluxAt(params, temperature);
  return {radius * std::sin(p * theta), radius * std::cos(p * theta),
          temperature};
}

SchedulingPoint SchedulingFrom(double theta, double temperature,
                               const MotorParams& params,
                               const ParameterBox& box) {
  const double tol = 1e-12 * std::max(1.0, std::abs(box.upper[2]));
  if (temperature < box.lower[2] - tol || temperature > box.upper[2] + tol) {
    std::ostringstream msg;
    msg << "temperature " << temperature << " °C outside scheduling box ["
        << box.lower[2] << ", " << box.upper[2] << "]";
    throw DomainError(msg.str());
  }
  return SchedulingFromUnchecked(theta, temperature, params);
}

double MaxFluxOver(const MotorParams& params, double t_min, double t_max) {
  return std::max(motor::FluxAt(params, t_min), motor::FluxAt(params, t_max));
}

ParameterBox DefaultBox(const MotorParams& params, double t_min, double t_max,
                        double omega_max, double t_dot_max) {
  if (!(t_min <= t_max)) {
    throw std::invalid_argument("DefaultBox: T_min must not exceed T_max");
  }
  if (!(omega_max > 0.0)) {
    throw std::invalid_argument("DefaultBox: omega_max must be positive");
  }
  if (!(t_dot_max >= 0.0)) {
    throw std::invalid_argument("DefaultBox: temperature rate must be >= 0");
  }
  const double p = params.pole_pairs;
  const double flux_max = MaxFluxOver(params, t_min, t_max);
  const double flux_rate_max =
      params.flux_ref * std::abs(params.magnet_temp_coeff) / 100.0 * t_dot_max;

  ParameterBox box;
  box.lower = {-p * flux_max, -p * flux_max, t_min};
  box.upper = {p * flux_max, p * flux_max, t_max};
  const double nu12 = p * p * flux_max * omega_max + p * flux_rate_max;
  box.rate = {nu12, nu12, t_min == t_max ? 0.0 : t_dot_max};
  return box;
}

ErrorPlantMatrices ErrorPlant(const SchedulingPoint& rho,
                              const MotorParams& params, LoadChannel channel) {
  const double jm = params.inertia;
  const double ls = params.stator_inductance;
  const double rs = motor::ResistanceAt(params, rho.rho3);

  ErrorPlantMatrices m;
  m.A << 0.0, 1.0, 0.0, 0.0,
         0.0, -params.friction / jm, -1.5 * rho.rho1 / jm, 1.5 * rho.rho2 / jm,
         0.0, rho.rho1 / ls, -rs / ls, 0.0,
         0.0, -rho.rho2 / ls, 0.0, -rs / ls;
  m.B1 << 0.0, channel == LoadChannel::kPhysical ? 1.0 / jm : 1.0, 0.0, 0.0;
  m.B2 << 0.0, 0.0,
          0.0, 0.0,
          1.0 / ls, 0.0,
          0.0, 1.0 / ls;
  m.C << 1.0, 0.0, 0.0, 0.0,
         0.0, 1.0, 0.0, 0.0;
  return m;
}

GeneralizedPlant MakeGeneralizedPlant(const SchedulingPoint& rho,
                                      const MotorParams& params,
                                      const PerformanceWeights& weights,
                                      LoadChannel channel) {
  const ErrorPlantMatrices e = ErrorPlant(rho, params, channel);
  GeneralizedPlant g;
  g.A = e.A;
  g.B1 = e.B1;
  g.B2 = e.B2;
  g.C2 = e.C;
  g.C1 = Eigen::MatrixXd::Zero(6, 4);
  g.C1.diagonal() << weights.phi, weights.sigma, weights.xi, weights.psi;
  g.D12 = Eigen::MatrixXd::Zero(6, 2);
  g.D12(4, 0) = weights.eta;
  g.D12(5, 1) = weights.mu;
  g.D11 = Eigen::MatrixXd::Zero(6, 1);
  g.D21 = Eigen::MatrixXd::Zero(2, 1);
  return g;
}

}  // namespace lpv
}  // namespace pmsm_lpv
