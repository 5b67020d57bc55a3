#include "pmsm_lpv/motor_model.h"

#include <cmath>
#include <sstream>

namespace pmsm_lpv {
namespace motor {

namespace {

void CheckTemperature(double temperature) {
  if (!std::isfinite(temperature) || temperature < kMinTemperature ||
      temperature > kMaxTemperature) {
    std::ostringstream msg;
    msg << "temperature " << temperature << " °C outside the sanity band ["
        << kMinTemperature << ", " << kMaxTemperature << "]";
    throw DomainError(msg.str());
  }
}

}  // namespace

void MotorParams::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(pole_pairs > 0, "pole_pairs must be positive");
  require(stator_resistance_ref > 0.0 && std::isfinite(stator_resistance_ref),
          "stator_resistance_ref must be positive");
  require(stator_inductance > 0.0 && std::isfinite(stator_inductance),
          "stator_inductance must be positive");
  require(flux_ref > 0.0 && std::isfinite(flux_ref),
          "flux_ref must be positive");
  require(inertia > 0.0 && std::isfinite(inertia), "inertia must be positive");
  require(friction >= 0.0 && std::isfinite(friction),
          "friction must be non-negative");
  require(std::isfinite(magnet_temp_coeff),
          "magnet_temp_coeff must be finite");
}

double ResistanceAt(const MotorParams& params, double temperature) {
  CheckTemperature(temperature);
  return params.stator_resistance_ref * (235.0 + temperature) / 310.0;
}

double FluxAt(const MotorParams& params, double temperature) {
  CheckTemperature(temperature);
  const double flux =
      params.flux_ref *
      (1.0 + params.magnet_temp_coeff * (temperature - 30.0) / 100.0);
  if (!(flux > 0.0)) {
    std::ostringstream msg;
    msg << "magnet fully demagnetized at " << temperature << " °C";
    throw DomainError(msg.str());
  }
  return flux;
}

double TorqueConstant(const MotorParams& params, double temperature) {
  return 1.5 * params.pole_pairs * FluxAt(params, temperature);
}

MotorState PlantDerivative(const MotorState& state, double v_alpha,
                           double v_beta, double load_torque,
                           double temperature, const MotorParams& params) {
  const double p = params.pole_pairs;
  const double rs = ResistanceAt(params, temperature);
  const double flux = FluxAt(params, temperature);
  const double kt = 1.5 * p * flux;
  const double s = std::sin(p * state.theta);
  const double c = std::cos(p * state.theta);
  const double ls = params.stator_inductance;

  MotorState d;
  d.theta = state.omega;
  d.omega = (-params.friction * state.omega - kt * s * state.i_alpha +
             kt * c * state.i_beta - load_torque) /
            params.inertia;
  d.i_alpha = (-rs * state.i_alpha + p * flux * state.omega * s + v_alpha) / ls;
  d.i_beta = (-rs * state.i_beta - p * flux * state.omega * c + v_beta) / ls;
  return d;
}

FeedforwardOutput Feedforward(const ReferenceSample& ref, double theta,
                              double omega, double temperature,
                              double u_alpha, double u_beta,
                              const MotorParams& params) {
  const double p = params.pole_pairs;
  const double kt = TorqueConstant(params, temperature);
  if (!(std::abs(kt) > 1e-12)) {
    throw DomainError("torque constant vanishes");
  }
  const double flux = FluxAt(params, temperature);
  const double rs = ResistanceAt(params, temperature);
  const double ls = params.stator_inductance;
  const double s = std::sin(p * theta);
  const double c = std::cos(p * theta);

  const double torque = params.inertia * ref.omega_ref_dot +
                        params.friction * ref.omega_ref;
  const double torque_dot = params.inertia * ref.omega_ref_ddot +
                            params.friction * ref.omega_ref_dot;
  // d/dt sin(pθ) = p ω cos(pθ), with ω the measured speed.
  const double angle_rate = p * omega;

  FeedforwardOutput out;
  out.i_alpha_ref = -torque * s / kt;
  out.i_beta_ref = torque * c / kt;
  const double i_alpha_ref_dot = -(torque_dot * s + torque * angle_rate * c) / kt;
  const double i_beta_ref_dot = (torque_dot * c - torque * angle_rate * s) / kt;

  out.v_alpha = ls * i_alpha_ref_dot + rs * out.i_alpha_ref -
                p * flux * ref.omega_ref * s - u_alpha;
  out.v_beta = ls * i_beta_ref_dot + rs * out.i_beta_ref +
               p * flux * ref.omega_ref * c - u_beta;
  return out;
}

ErrorState ErrorDerivative(const ErrorState& err, double theta, double u_alpha,
                           double u_beta, double load_torque,
                           double temperature, const MotorParams& params,
                           LoadChannel channel) {
  const double p = params.pole_pairs;
  const double rs = ResistanceAt(params, temperature);
  const double flux = FluxAt(params, temperature);
  const double kt = 1.5 * p * flux;
  const double s = std::sin(p * theta);
  const double c = std::cos(p * theta);
  const double ls = params.stator_inductance;
  const double jm = params.inertia;

  const double load_term =
      channel == LoadChannel::kPhysical ? load_torque / jm : load_torque;

  ErrorState d;
  d.e_z = err.e_omega;
  d.e_omega = (-params.friction * err.e_omega - kt * s * err.e_alpha +
               kt * c * err.e_beta) /
                  jm +
              load_term;
  d.e_alpha = (-rs * err.e_alpha + p * flux * s * err.e_omega + u_alpha) / ls;
  d.e_beta = (-rs * err.e_beta - p * flux * c * err.e_omega + u_beta) / ls;
  return d;
}

}  // namespace motor
}  // namespace pmsm_lpv
