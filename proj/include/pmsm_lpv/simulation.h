#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmsm_lpv/controller_runtime.h"
#include "pmsm_lpv/lpv_model.h"
#include "pmsm_lpv/motor_model.h"

namespace pmsm_lpv {
namespace simulation {

/// Speed command change to `target_rpm` starting at `time`.
struct SpeedStep {
  double time{0.0};
  double target_rpm{0.0};
  bool operator==(const SpeedStep&) const = default;
};

/// Piecewise S-curve speed reference. Each step is a quintic blend of length
/// ramp_time, so speed, acceleration and jerk-free endpoints match.
struct ReferenceProfile {
  double initial_rpm{0.0};
  std::vector<SpeedStep> steps;
  double ramp_time{0.01};

  /// Reference in rad/s with its derivatives at time t.
  motor::ReferenceSample At(double t) const;
  /// Commanded level in r/min once all ramps starting at or before t end.
  double TargetRpmAt(double t) const;
  bool operator==(const ReferenceProfile&) const = default;
};

struct LoadStep {
  double time{0.0};
  double torque{0.0};  // N·m, held from `time` on
  bool operator==(const LoadStep&) const = default;
};

struct LoadProfile {
  double initial{0.0};
  std::vector<LoadStep> steps;

  double At(double t) const;
  bool operator==(const LoadProfile&) const = default;
};

struct TemperaturePoint {
  double time{0.0};
  double temperature{0.0};  // °C
  bool operator==(const TemperaturePoint&) const = default;
};

/// Linear interpolation between points, constant outside them.
struct TemperatureProfile {
  std::vector<TemperaturePoint> points{{0.0, 30.0}};

  double At(double t) const;
  double Min() const;
  double Max() const;
  bool operator==(const TemperatureProfile&) const = default;
};

/// Multipliers applied to the simulated motor, never to the controller model.
struct PerturbationFactors {
  double inductance{1.0};
  double inertia{1.0};
  double resistance{1.0};
  double friction{1.0};

  bool IsIdentity() const;
  bool operator==(const PerturbationFactors&) const = default;
};

/// A controller model that under-estimates L_s and J_m by 50 % and
/// over-estimates R_s and B by 50 %: the true motor has 2 L_s, 2 J_m,
/// R_s / 1.5 and B / 1.5.
PerturbationFactors WorstCasePerturbation();

/// Throws std::invalid_argument when a factor is not positive.
motor::MotorParams Perturb(const motor::MotorParams& params,
                           const PerturbationFactors& factors);

struct Scenario {
  std::string name{"default"};
  ReferenceProfile reference;
  LoadProfile load;
  TemperatureProfile temperature;
  PerturbationFactors perturbation;
  motor::MotorState initial_state;
  double duration{2.0};
  double step{1e-5};
  int decimation{10};

  /// Throws std::invalid_argument on a non-positive step, duration,
  /// decimation or perturbation factor, or events outside [0, duration].
  void Validate() const;
  /// Times where an input changes its formula, sorted and unique.
  std::vector<double> Breakpoints() const;
  bool operator==(const Scenario&) const = default;
};

/// 0→300 r/min at 0.1 s and 300→100 r/min at 1.0 s with a 10 ms S-curve,
/// 2 s long, at a constant 30 °C.
Scenario StepScenario();
/// StepScenario with a 0.1 N·m load from 0.5 s to 1.5 s and a 30→100 °C
/// temperature ramp over the run.
Scenario DisturbanceScenario();
/// DisturbanceScenario on the worst-case perturbed motor.
Scenario PerturbedScenario();
/// Scenario by name: "step-nodist", "disturbance" or "perturbed".
Scenario NamedScenario(const std::string& name);
std::vector<std::string> ScenarioNames();

nlohmann::json ToJson(const Scenario& scenario);
/// Throws std::invalid_argument naming the first unknown or malformed key.
/// Missing keys keep their defaults.
Scenario ScenarioFromJson(const nlohmann::json& j);
/// Hex digest of the canonical serialization.
std::string ScenarioHash(const Scenario& scenario);

// ---------------------------------------------------------------------------

struct PiGains {
  double speed_kp{0.533};
  double speed_ki{61.4};
  double current_kp{1.38};
  double current_ki{691.0};
  bool operator==(const PiGains&) const = default;
};

struct FocPiState {
  double speed_integral{0.0};  // ∫(ω* − ω)
  double d_integral{0.0};      // ∫(i_d* − i_d)
  double q_integral{0.0};      // ∫(i_q* − i_q)
};

struct Measurements {
  double theta{0.0};
  double omega{0.0};
  double i_alpha{0.0};
  double i_beta{0.0};
};

/// (i_d, i_q) of (i_α, i_β) at electrical angle `angle`.
std::pair<double, double> Park(double i_alpha, double i_beta, double angle);
/// (v_α, v_β) of (v_d, v_q) at electrical angle `angle`.
std::pair<double, double> InversePark(double v_d, double v_q, double angle);

struct FocPiOutput {
  double v_alpha{0.0};
  double v_beta{0.0};
  double i_q_ref{0.0};
  FocPiState rate;  // integrator derivatives
};

/// Speed PI on ω* − ω gives i_q*, i_d* = 0, current PIs give (v_d, v_q),
/// rotated back with the electrical angle pθ.
FocPiOutput EvaluateFocPi(const FocPiState& state, const Measurements& m,
                          double omega_ref, const PiGains& gains,
                          int pole_pairs);

/// Cascade PI controller with its own integrator state.
class FocPiController {
 public:
  FocPiController(PiGains gains, int pole_pairs);

  /// Returns (v_α, v_β) at the current state, then advances the integrators
  /// by one RK4 step of length dt with the inputs held.
  std::pair<double, double> Step(const Measurements& m, double omega_ref,
                                 double dt);
  const FocPiState& state() const { return state_; }
  void Reset() { state_ = {}; }

 private:
  PiGains gains_;
  int pole_pairs_;
  FocPiState state_;
};

// ---------------------------------------------------------------------------

enum class ControllerKind {
  kLpv,          ///< Feedforward plus LPV output feedback.
  kFocPi,        ///< Field-oriented cascade PI.
  kFeedforward,  ///< Feedforward voltages only, u ≡ 0.
};

std::string ToString(ControllerKind kind);

struct TraceSample {
  double time{0.0};
  motor::MotorState state;
  motor::ErrorState error;
  double u_alpha{0.0};
  double u_beta{0.0};
  double v_alpha{0.0};
  double v_beta{0.0};
  double load{0.0};
  double temperature{0.0};
  lpv::SchedulingPoint rho;
  double omega_ref{0.0};

  bool operator==(const TraceSample&) const = default;
};

struct SimTrace {
  std::string controller;  // label, e.g. "lpv" or "foc-pi"
  std::string scenario_hash;
  Scenario scenario;
  double sample_interval{0.0};
  std::vector<TraceSample> samples;
  bool divergent{false};
  double abort_time{0.0};
};

/// Any state component beyond this magnitude aborts the run.
inline constexpr double kDivergenceThreshold = 1e9;

/// Closed loop under the LPV controller. The motor uses the perturbed
/// parameters, feedforward and controller the nominal ones. The controller
/// state starts at zero; `controller` itself is not modified.
SimTrace SimulateLpv(const Scenario& scenario,
                     const controller::ControllerRealization& controller,
                     const motor::MotorParams& nominal);

SimTrace SimulateFocPi(const Scenario& scenario, const PiGains& gains,
                       const motor::MotorParams& nominal);

SimTrace SimulateFeedforward(const Scenario& scenario,
                             const motor::MotorParams& nominal);

// ---------------------------------------------------------------------------

inline constexpr double kUnsettled = -1.0;

/// Response to one reference step, evaluated up to the next event.
struct StepMetrics {
  double start{0.0};
  double end{0.0};
  double from_rpm{0.0};
  double to_rpm{0.0};
  double overshoot_percent{0.0};  // of the step magnitude
  double rise_time{0.0};          // 10 % to 90 %, s
  double settling_time{0.0};      // into ±2 %, s after start, or kUnsettled
  bool settled{false};
  double steady_state_error_rpm{0.0};  // max |e_ω| over the final 0.1 s
  double itae{0.0};                    // ∫(t − start)|e_ω| dt, rad
  double rms_error_rpm{0.0};
};

/// Response to one load change, evaluated up to the next event.
struct DisturbanceMetrics {
  double start{0.0};
  double end{0.0};
  double peak_deviation_rpm{0.0};  // max |e_ω|
  double itae{0.0};                // ∫(t − start)|e_ω| dt, rad
  double rms_error_rpm{0.0};
};

struct Metrics {
  std::vector<StepMetrics> steps;
  std::vector<DisturbanceMetrics> disturbances;
  double itae{0.0};  // ∫ t|e_ω| dt over the whole run, rad
  double rms_error_rpm{0.0};
  double peak_overshoot_percent{0.0};
};

/// Throws std::invalid_argument for a divergent trace.
Metrics ComputeMetrics(const SimTrace& trace);

nlohmann::json ToJson(const Metrics& metrics);

// ---------------------------------------------------------------------------

/// Column names of the trace CSV in order, with units.
const std::vector<std::string>& TraceColumns();

/// CSV with `#`-prefixed header lines carrying the controller label, the
/// scenario hash and the scenario, then one row per sample printed with 17
/// significant digits.
std::string TraceToCsv(const SimTrace& trace);
/// Throws std::invalid_argument on malformed input.
SimTrace TraceFromCsv(const std::string& text);

/// Long format "time_s,series,value" for plotting.
std::string TraceToLongCsv(const SimTrace& trace);

}  // namespace simulation
}  // namespace pmsm_lpv
