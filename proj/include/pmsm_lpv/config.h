#pragma once

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmsm_lpv/controller_runtime.h"
#include "pmsm_lpv/lmi_synthesis.h"
#include "pmsm_lpv/lpv_model.h"
#include "pmsm_lpv/motor_model.h"
#include "pmsm_lpv/simulation.h"

namespace pmsm_lpv {
namespace config {

inline constexpr int kSchemaVersion = 1;

/// Raised for malformed or inconsistent configuration and artifact files.
/// The message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operating range that fixes the scheduling box and its rate bounds.
struct SchedulingRange {
  double temperature_min{30.0};       // °C
  double temperature_max{130.0};      // °C
  double omega_max_rpm{300.0};        // bounds the electrical angle rate
  double temperature_rate_max{40.0};  // °C/s
  bool operator==(const SchedulingRange&) const = default;
};

struct SynthesisSettings {
  synthesis::GridMode grid_mode{synthesis::GridMode::kCircle};
  std::array<int, 3> counts{5, 5, 3};
  std::array<int, 3> verify_counts{9, 9, 5};
  double lmi_margin{1e-7};
  double pole_radius{5e4};
  double decision_bound{1e4};
  double gamma_backoff{0.02};
  double time_scale{1000.0};
  std::vector<double> state_scale{1000.0, 1.0, 4.0, 4.0};
  sdp::Options solver;
  bool operator==(const SynthesisSettings& other) const;
};

/// Uncertainty for the robust design. Explicit matrices take precedence;
/// otherwise the cover is derived from `perturbation` with `model`.
struct RobustSettings {
  synthesis::UncertaintyModel model{synthesis::UncertaintyModel::kInputGain};
  simulation::PerturbationFactors perturbation{simulation::WorstCasePerturbation()};
  std::optional<synthesis::RobustData> matrices;
  std::optional<double> epsilon;
  double epsilon_lower{1e-5};
  double epsilon_upper{10.0};
  int epsilon_iterations{6};
  std::array<int, 3> epsilon_counts{3, 3, 2};
  bool operator==(const RobustSettings&) const = default;
};

struct ControllerSettings {
  controller::FactorizationMode factorization{controller::FactorizationMode::kDefault};
  /// Electrical angles of the interpolation table; zero reconstructs the
  /// controller exactly at every evaluation.
  int interpolation_angles{0};
  int interpolation_temperatures{8};
  bool operator==(const ControllerSettings&) const = default;
};

struct ToolkitConfig {
  motor::MotorParams motor;
  lpv::PerformanceWeights weights;
  motor::LoadChannel load_channel{motor::LoadChannel::kPhysical};
  SchedulingRange scheduling;
  SynthesisSettings synthesis;
  RobustSettings robust;
  ControllerSettings controller;
  simulation::PiGains pi;
  std::vector<simulation::Scenario> scenarios{simulation::StepScenario(),
                                              simulation::DisturbanceScenario(),
                                              simulation::PerturbedScenario()};
  std::string output_dir{"out"};

  /// Throws ConfigError on values that no run could use.
  void Validate() const;
  bool operator==(const ToolkitConfig&) const = default;
};

nlohmann::json ToJson(const ToolkitConfig& config);
/// Strict parser: "schema_version" is required, unknown keys are rejected and
/// missing keys keep their defaults.
ToolkitConfig ConfigFromJson(const nlohmann::json& j);
/// Reads and parses a file. Errors are prefixed with the path.
ToolkitConfig LoadConfig(const std::string& path);

std::string ToString(motor::LoadChannel channel);
motor::LoadChannel LoadChannelFromString(const std::string& name);

lpv::ParameterBox Box(const ToolkitConfig& config);
controller::PlantFactory Plant(const ToolkitConfig& config);
/// Synthesis problem for the nominal or robust design.
synthesis::SynthesisProblem MakeProblem(const ToolkitConfig& config, bool robust);
/// Uncertainty matrices the robust design uses.
synthesis::RobustData Uncertainty(const ToolkitConfig& config);
/// Throws ConfigError for a name that is not among config.scenarios.
const simulation::Scenario& FindScenario(const ToolkitConfig& config,
                                         const std::string& name);

// ---------------------------------------------------------------------------

/// A synthesized controller together with the model it was designed for.
struct ControllerArtifact {
  motor::MotorParams motor;
  lpv::PerformanceWeights weights;
  motor::LoadChannel load_channel{motor::LoadChannel::kPhysical};
  bool robust{false};
  synthesis::SynthesisSolution solution;
  bool operator==(const ControllerArtifact&) const = default;
};

ControllerArtifact MakeArtifact(const ToolkitConfig& config, bool robust,
                                synthesis::SynthesisSolution solution);
std::string SerializeArtifact(const ControllerArtifact& artifact);
/// Throws ConfigError on malformed input.
ControllerArtifact DeserializeArtifact(const std::string& text);
ControllerArtifact LoadArtifact(const std::string& path);

/// Throws ConfigError naming both sources when the artifact was designed for
/// another motor model or has the wrong dimensions.
void CheckCompatible(const ControllerArtifact& artifact, const ToolkitConfig& config,
                     const std::string& artifact_name, const std::string& config_name);

/// Online controller for an artifact with the runtime settings of `config`.
std::unique_ptr<controller::ControllerRealization> MakeController(
    const ControllerArtifact& artifact, const ToolkitConfig& config);

}  // namespace config
}  // namespace pmsm_lpv
