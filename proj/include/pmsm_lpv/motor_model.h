#pragma once

#include <stdexcept>
#include <string>

namespace pmsm_lpv {

/// Raised when a physical quantity leaves its admissible range (temperature
/// outside the sanity band, demagnetized flux, vanishing torque constant).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

namespace motor {

/// Conversion factor between r/min and rad/s.
inline constexpr double kRpmToRadPerSec = 3.14159265358979323846 / 30.0;

/// Temperature band accepted by the parameter maps, in degrees Celsius.
inline constexpr double kMinTemperature = -50.0;
inline constexpr double kMaxTemperature = 250.0;

/// Selects how the load torque enters the error dynamics.
///
/// kPhysical scales the load by 1/J_m, which is what the error dynamics
/// derived from the mechanical equation produce. kLiteral uses a unit load
/// column, matching the tabulated LPV input matrix verbatim.
enum class LoadChannel { kPhysical, kLiteral };

/// Physical constants of a surface PMSM. Resistance is referenced to 75 °C,
/// magnet flux to 30 °C.
struct MotorParams {
  int pole_pairs{4};
  double stator_resistance_ref{0.2};  // Ω at 75 °C
  double stator_inductance{0.4e-3};   // H
  double flux_ref{16.3e-3};           // Wb at 30 °C
  double inertia{3.24e-5};            // kg·m²
  double friction{0.004};             // N·m·s/rad
  double magnet_temp_coeff{-0.12};    // %/°C

  /// Throws std::invalid_argument when an invariant is violated.
  void Validate() const;

  bool operator==(const MotorParams&) const = default;
};

struct MotorState {
  double theta{0.0};    // mechanical angle, rad
  double omega{0.0};    // mechanical speed, rad/s
  double i_alpha{0.0};  // A
  double i_beta{0.0};   // A

  bool operator==(const MotorState&) const = default;
};

/// Desired speed and its first two time derivatives.
struct ReferenceSample {
  double omega_ref{0.0};
  double omega_ref_dot{0.0};
  double omega_ref_ddot{0.0};
};

/// Tracking errors (e_z, e_ω, e_α, e_β); e_z integrates e_ω.
struct ErrorState {
  double e_z{0.0};
  double e_omega{0.0};
  double e_alpha{0.0};
  double e_beta{0.0};

  bool operator==(const ErrorState&) const = default;
};

struct FeedforwardOutput {
  double i_alpha_ref{0.0};
  double i_beta_ref{0.0};
  double v_alpha{0.0};
  double v_beta{0.0};
};

/// R_s(T) = R_s0 (235 + T) / 310.
double ResistanceAt(const MotorParams& params, double temperature);

/// λ_pm(T) = λ_pm0 (1 + α (T − 30) / 100). Throws DomainError when the
/// result is not positive.
double FluxAt(const MotorParams& params, double temperature);

/// K_t = (3/2) p λ_pm(T).
double TorqueConstant(const MotorParams& params, double temperature);

/// Time derivative of the α–β frame motor model.
MotorState PlantDerivative(const MotorState& state, double v_alpha,
                           double v_beta, double load_torque,
                           double temperature, const MotorParams& params);

/// Desired currents and applied voltages for a reference sample. The
/// derivative of the desired currents is evaluated analytically with the
/// rotor speed `omega` standing in for dθ/dt. The control inputs are
/// subtracted from the voltages.
FeedforwardOutput Feedforward(const ReferenceSample& ref, double theta,
                              double omega, double temperature,
                              double u_alpha, double u_beta,
                              const MotorParams& params);

/// Tracking-error dynamics at rotor angle `theta`.
ErrorState ErrorDerivative(const ErrorState& err, double theta, double u_alpha,
                           double u_beta, double load_torque,
                           double temperature, const MotorParams& params,
                           LoadChannel channel = LoadChannel::kPhysical);

}  // namespace motor
}  // namespace pmsm_lpv
