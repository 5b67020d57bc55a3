#include "pmsm_lpv/config.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json_fields.h"

namespace pmsm_lpv {
namespace config {

using internal::JsonReader;
using nlohmann::json;

namespace {

constexpr const char* kArtifactFormat = "pmsm_lpv.controller";
constexpr int kArtifactVersion = 1;

json CountsToJson(const std::array<int, 3>& c) { return json::array({c[0], c[1], c[2]}); }

void ReadCounts(JsonReader& r, const std::string& key, std::array<int, 3>* out) {
  const json* v = r.Take(key);
  if (!v) return;
  const std::string path = r.PathOf(key);
  if (!v->is_array() || v->size() != 3) JsonReader::Fail(path, "expected three integers");
  for (int i = 0; i < 3; ++i) {
    if (!(*v)[i].is_number_integer()) {
      JsonReader::Fail(internal::ElementPath(path, i), "expected an integer");
    }
    (*out)[i] = (*v)[i].get<int>();
  }
}

template <typename T, typename Parse>
void ReadEnum(JsonReader& r, const std::string& key, T* out, Parse parse) {
  std::string name;
  if (!r.Has(key)) return;
  r.Read(key, &name);
  try {
    *out = parse(name);
  } catch (const std::invalid_argument& e) {
    JsonReader::Fail(r.PathOf(key), e.what());
  }
}

json MotorToJson(const motor::MotorParams& m) {
  return {{"pole_pairs", m.pole_pairs},
          {"stator_resistance_ref_ohm", m.stator_resistance_ref},
          {"stator_inductance_H", m.stator_inductance},
          {"flux_ref_Wb", m.flux_ref},
          {"inertia_kg_m2", m.inertia},
          {"friction_Nm_s", m.friction},
          {"magnet_temp_coeff_percent_per_C", m.magnet_temp_coeff}};
}

motor::MotorParams MotorFromJson(const json& j, const std::string& path) {
  motor::MotorParams m;
  JsonReader r(j, path);
  r.Read("pole_pairs", &m.pole_pairs);
  r.Read("stator_resistance_ref_ohm", &m.stator_resistance_ref);
  r.Read("stator_inductance_H", &m.stator_inductance);
  r.Read("flux_ref_Wb", &m.flux_ref);
  r.Read("inertia_kg_m2", &m.inertia);
  r.Read("friction_Nm_s", &m.friction);
  r.Read("magnet_temp_coeff_percent_per_C", &m.magnet_temp_coeff);
  r.Finish();
  return m;
}

json WeightsToJson(const lpv::PerformanceWeights& w) {
  return {{"phi", w.phi}, {"sigma", w.sigma}, {"xi", w.xi},
          {"psi", w.psi}, {"eta", w.eta},     {"mu", w.mu}};
}

lpv::PerformanceWeights WeightsFromJson(const json& j, const std::string& path) {
  lpv::PerformanceWeights w;
  JsonReader r(j, path);
  r.Read("phi", &w.phi);
  r.Read("sigma", &w.sigma);
  r.Read("xi", &w.xi);
  r.Read("psi", &w.psi);
  r.Read("eta", &w.eta);
  r.Read("mu", &w.mu);
  r.Finish();
  return w;
}

template <typename F>
auto Rethrow(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

bool SynthesisSettings::operator==(const SynthesisSettings& o) const {
  const sdp::Options& a = solver;
  const sdp::Options& b = o.solver;
  return grid_mode == o.grid_mode && counts == o.counts && verify_counts == o.verify_counts &&
         lmi_margin == o.lmi_margin && pole_radius == o.pole_radius &&
         decision_bound == o.decision_bound && gamma_backoff == o.gamma_backoff &&
         time_scale == o.time_scale && state_scale == o.state_scale &&
         a.max_iterations == b.max_iterations && a.gap_tolerance == b.gap_tolerance &&
         a.feasibility_tolerance == b.feasibility_tolerance &&
         a.infeasibility_tolerance == b.infeasibility_tolerance &&
         a.acceptable_tolerance == b.acceptable_tolerance &&
         a.step_fraction == b.step_fraction && a.verbose == b.verbose;
}

std::string ToString(motor::LoadChannel channel) {
  return channel == motor::LoadChannel::kPhysical ? "physical" : "literal";
}

motor::LoadChannel LoadChannelFromString(const std::string& name) {
  if (name == "physical") return motor::LoadChannel::kPhysical;
  if (name == "literal") return motor::LoadChannel::kLiteral;
  throw std::invalid_argument("unknown load channel '" + name + "'");
}

void ToolkitConfig::Validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("'" + key + "': " + what);
  };
  Rethrow([&] {
    motor.Validate();
    weights.Validate();
    return 0;
  });
  const SchedulingRange& s = scheduling;
  if (!(s.temperature_min <= s.temperature_max)) {
    fail("scheduling.temperature_max", "must not be below temperature_min");
  }
  if (!(s.omega_max_rpm > 0.0)) fail("scheduling.omega_max_rpm", "must be positive");
  if (!(s.temperature_rate_max >= 0.0)) fail("scheduling.temperature_rate_max", "must not be negative");
  for (int i = 0; i < 3; ++i) {
    if (synthesis.counts[i] < 1) fail("synthesis.counts", "entries must be at least 1");
    if (synthesis.verify_counts[i] < 1) fail("synthesis.verify_counts", "entries must be at least 1");
    if (robust.epsilon_counts[i] < 1) fail("robust.epsilon_search.counts", "entries must be at least 1");
  }
  if (!(synthesis.lmi_margin >= 0.0)) fail("synthesis.lmi_margin", "must not be negative");
  if (!(synthesis.pole_radius >= 0.0)) fail("synthesis.pole_radius", "must not be negative");
  if (!(synthesis.decision_bound >= 0.0)) fail("synthesis.decision_bound", "must not be negative");
  if (!(synthesis.gamma_backoff >= 0.0)) fail("synthesis.gamma_backoff", "must not be negative");
  if (!(synthesis.time_scale > 0.0)) fail("synthesis.time_scale", "must be positive");
  if (!synthesis.state_scale.empty()) {
    if (synthesis.state_scale.size() != 4) fail("synthesis.state_scale", "expected 4 entries");
    for (double v : synthesis.state_scale) {
      if (!(v > 0.0)) fail("synthesis.state_scale", "entries must be positive");
    }
  }
  if (synthesis.solver.max_iterations < 1) fail("synthesis.solver.max_iterations", "must be at least 1");
  const simulation::PerturbationFactors& f = robust.perturbation;
  if (!(f.inductance > 0.0 && f.inertia > 0.0 && f.resistance > 0.0 && f.friction > 0.0)) {
    fail("robust.perturbation", "factors must be positive");
  }
  if (robust.matrices) {
    try {
      robust.matrices->Validate(4, 2);
    } catch (const std::invalid_argument& e) {
      fail("robust.uncertainty", e.what());
    }
  }
  if (robust.epsilon && !(*robust.epsilon > 0.0)) fail("robust.epsilon", "must be positive");
  if (!(robust.epsilon_lower > 0.0 && robust.epsilon_lower < robust.epsilon_upper)) {
    fail("robust.epsilon_search", "needs 0 < lower < upper");
  }
  if (robust.epsilon_iterations < 1) fail("robust.epsilon_search.iterations", "must be at least 1");
  if (controller.interpolation_angles < 0 ||
      (controller.interpolation_angles > 0 && controller.interpolation_angles < 4)) {
    fail("controller.interpolation_angles", "must be 0 or at least 4");
  }
  if (controller.interpolation_temperatures < 2) {
    fail("controller.interpolation_temperatures", "must be at least 2");
  }
  if (scenarios.empty()) fail("scenarios", "at least one scenario is required");
  for (size_t i = 0; i < scenarios.size(); ++i) {
    const std::string key = internal::ElementPath("scenarios", i);
    try {
      scenarios[i].Validate();
    } catch (const std::invalid_argument& e) {
      fail(key, e.what());
    }
    for (size_t k = 0; k < i; ++k) {
      if (scenarios[k].name == scenarios[i].name) fail(key, "duplicate name '" + scenarios[i].name + "'");
    }
  }
  if (output_dir.empty()) fail("output_dir", "must not be empty");
}

json ToJson(const ToolkitConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["motor"] = MotorToJson(c.motor);
  j["weights"] = WeightsToJson(c.weights);
  j["load_channel"] = ToString(c.load_channel);
  j["scheduling"] = {{"temperature_min_C", c.scheduling.temperature_min},
                     {"temperature_max_C", c.scheduling.temperature_max},
                     {"omega_max_rpm", c.scheduling.omega_max_rpm},
                     {"temperature_rate_max_C_per_s", c.scheduling.temperature_rate_max}};
  const SynthesisSettings& s = c.synthesis;
  j["synthesis"] = {
      {"grid_mode", synthesis::ToString(s.grid_mode)},
      {"counts", CountsToJson(s.counts)},
      {"verify_counts", CountsToJson(s.verify_counts)},
      {"lmi_margin", s.lmi_margin},
      {"pole_radius_rad_s", s.pole_radius},
      {"decision_bound", s.decision_bound},
      {"gamma_backoff", s.gamma_backoff},
      {"time_scale", s.time_scale},
      {"state_scale", s.state_scale},
      {"solver",
       {{"max_iterations", s.solver.max_iterations},
        {"gap_tolerance", s.solver.gap_tolerance},
        {"feasibility_tolerance", s.solver.feasibility_tolerance},
        {"infeasibility_tolerance", s.solver.infeasibility_tolerance},
        {"acceptable_tolerance", s.solver.acceptable_tolerance},
        {"step_fraction", s.solver.step_fraction},
        {"verbose", s.solver.verbose}}}};
  const RobustSettings& r = c.robust;
  json uncertainty;
  if (r.matrices) {
    uncertainty = {{"H", internal::MatrixToJson(r.matrices->H)},
                   {"E1", internal::MatrixToJson(r.matrices->E1)},
                   {"E2", internal::MatrixToJson(r.matrices->E2)}};
  } else {
    uncertainty = {{"model", synthesis::ToString(r.model)}};
  }
  j["robust"] = {{"uncertainty", uncertainty},
                 {"perturbation",
                  {{"inductance", r.perturbation.inductance},
                   {"inertia", r.perturbation.inertia},
                   {"resistance", r.perturbation.resistance},
                   {"friction", r.perturbation.friction}}},
                 {"epsilon", r.epsilon ? json(*r.epsilon) : json(nullptr)},
                 {"epsilon_search",
                  {{"lower", r.epsilon_lower},
                   {"upper", r.epsilon_upper},
                   {"iterations", r.epsilon_iterations},
                   {"counts", CountsToJson(r.epsilon_counts)}}}};
  j["controller"] = {{"factorization", controller::ToString(c.controller.factorization)},
                     {"interpolation_angles", c.controller.interpolation_angles},
                     {"interpolation_temperatures", c.controller.interpolation_temperatures}};
  j["pi"] = {{"speed_kp", c.pi.speed_kp},
             {"speed_ki", c.pi.speed_ki},
             {"current_kp", c.pi.current_kp},
             {"current_ki", c.pi.current_ki}};
  j["scenarios"] = json::array();
  for (const simulation::Scenario& sc : c.scenarios) j["scenarios"].push_back(simulation::ToJson(sc));
  j["output_dir"] = c.output_dir;
  return j;
}

ToolkitConfig ConfigFromJson(const json& j) {
  return Rethrow([&] {
    ToolkitConfig c;
    JsonReader r(j, "");
    if (!r.Has("schema_version")) JsonReader::Fail("schema_version", "missing");
    int version = 0;
    r.Read("schema_version", &version);
    if (version != kSchemaVersion) {
      JsonReader::Fail("schema_version", "unsupported version " + std::to_string(version) +
                                             ", expected " + std::to_string(kSchemaVersion));
    }
    if (const json* m = r.Take("motor")) c.motor = MotorFromJson(*m, "motor");
    if (const json* w = r.Take("weights")) c.weights = WeightsFromJson(*w, "weights");
    ReadEnum(r, "load_channel", &c.load_channel, LoadChannelFromString);
    if (const json* v = r.Take("scheduling")) {
      JsonReader s(*v, "scheduling");
      s.Read("temperature_min_C", &c.scheduling.temperature_min);
      s.Read("temperature_max_C", &c.scheduling.temperature_max);
      s.Read("omega_max_rpm", &c.scheduling.omega_max_rpm);
      s.Read("temperature_rate_max_C_per_s", &c.scheduling.temperature_rate_max);
      s.Finish();
    }
    if (const json* v = r.Take("synthesis")) {
      JsonReader s(*v, "synthesis");
      SynthesisSettings& out = c.synthesis;
      ReadEnum(s, "grid_mode", &out.grid_mode, synthesis::GridModeFromString);
      ReadCounts(s, "counts", &out.counts);
      ReadCounts(s, "verify_counts", &out.verify_counts);
      s.Read("lmi_margin", &out.lmi_margin);
      s.Read("pole_radius_rad_s", &out.pole_radius);
      s.Read("decision_bound", &out.decision_bound);
      s.Read("gamma_backoff", &out.gamma_backoff);
      s.Read("time_scale", &out.time_scale);
      if (const json* scale = s.Take("state_scale")) {
        const std::string path = s.PathOf("state_scale");
        internal::RequireArray(*scale, path);
        out.state_scale.clear();
        for (size_t i = 0; i < scale->size(); ++i) {
          if (!(*scale)[i].is_number()) JsonReader::Fail(internal::ElementPath(path, i), "expected a number");
          out.state_scale.push_back((*scale)[i].get<double>());
        }
      }
      if (const json* solver = s.Take("solver")) {
        JsonReader o(*solver, s.PathOf("solver"));
        o.Read("max_iterations", &out.solver.max_iterations);
        o.Read("gap_tolerance", &out.solver.gap_tolerance);
        o.Read("feasibility_tolerance", &out.solver.feasibility_tolerance);
        o.Read("infeasibility_tolerance", &out.solver.infeasibility_tolerance);
        o.Read("acceptable_tolerance", &out.solver.acceptable_tolerance);
        o.Read("step_fraction", &out.solver.step_fraction);
        o.Read("verbose", &out.solver.verbose);
        o.Finish();
      }
      s.Finish();
    }
    if (const json* v = r.Take("robust")) {
      JsonReader s(*v, "robust");
      RobustSettings& out = c.robust;
      if (const json* u = s.Take("uncertainty")) {
        JsonReader ur(*u, s.PathOf("uncertainty"));
        const bool explicit_matrices = ur.Has("H") || ur.Has("E1") || ur.Has("E2");
        if (explicit_matrices) {
          if (ur.Has("model")) {
            JsonReader::Fail(ur.PathOf("model"), "give either a model or H, E1 and E2");
          }
          synthesis::RobustData d;
          for (const char* key : {"H", "E1", "E2"}) {
            const json* m = ur.Take(key);
            if (!m) JsonReader::Fail(ur.PathOf(key), "missing");
            const Eigen::MatrixXd value = internal::MatrixFromJson(*m, ur.PathOf(key));
            (std::string(key) == "H" ? d.H : std::string(key) == "E1" ? d.E1 : d.E2) = value;
          }
          out.matrices = d;
        } else {
          ReadEnum(ur, "model", &out.model, synthesis::UncertaintyModelFromString);
        }
        ur.Finish();
      }
      if (const json* p = s.Take("perturbation")) {
        JsonReader pr(*p, s.PathOf("perturbation"));
        pr.Read("inductance", &out.perturbation.inductance);
        pr.Read("inertia", &out.perturbation.inertia);
        pr.Read("resistance", &out.perturbation.resistance);
        pr.Read("friction", &out.perturbation.friction);
        pr.Finish();
      }
      if (const json* e = s.Take("epsilon")) {
        if (e->is_null()) {
          out.epsilon.reset();
        } else if (e->is_number()) {
          out.epsilon = e->get<double>();
        } else {
          JsonReader::Fail(s.PathOf("epsilon"), "expected a number or null");
        }
      }
      if (const json* e = s.Take("epsilon_search")) {
        JsonReader er(*e, s.PathOf("epsilon_search"));
        er.Read("lower", &out.epsilon_lower);
        er.Read("upper", &out.epsilon_upper);
        er.Read("iterations", &out.epsilon_iterations);
        ReadCounts(er, "counts", &out.epsilon_counts);
        er.Finish();
      }
      s.Finish();
    }
    if (const json* v = r.Take("controller")) {
      JsonReader s(*v, "controller");
      ReadEnum(s, "factorization", &c.controller.factorization,
               controller::FactorizationModeFromString);
      s.Read("interpolation_angles", &c.controller.interpolation_angles);
      s.Read("interpolation_temperatures", &c.controller.interpolation_temperatures);
      s.Finish();
    }
    if (const json* v = r.Take("pi")) {
      JsonReader s(*v, "pi");
      s.Read("speed_kp", &c.pi.speed_kp);
      s.Read("speed_ki", &c.pi.speed_ki);
      s.Read("current_kp", &c.pi.current_kp);
      s.Read("current_ki", &c.pi.current_ki);
      s.Finish();
    }
    if (const json* v = r.Take("scenarios")) {
      internal::RequireArray(*v, "scenarios");
      c.scenarios.clear();
      for (size_t i = 0; i < v->size(); ++i) {
        try {
          c.scenarios.push_back(simulation::ScenarioFromJson((*v)[i]));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(internal::ElementPath("scenarios", i) + ": " + e.what());
        }
      }
    }
    r.Read("output_dir", &c.output_dir);
    r.Finish();
    c.Validate();
    return c;
  });
}

ToolkitConfig LoadConfig(const std::string& path) {
  const std::string text = ReadFile(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": not valid JSON: " + e.what());
  }
  try {
    return ConfigFromJson(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

lpv::ParameterBox Box(const ToolkitConfig& c) {
  return lpv::DefaultBox(c.motor, c.scheduling.temperature_min, c.scheduling.temperature_max,
                         c.scheduling.omega_max_rpm * motor::kRpmToRadPerSec,
                         c.scheduling.temperature_rate_max);
}

controller::PlantFactory Plant(const ToolkitConfig& c) {
  return [params = c.motor, weights = c.weights, channel = c.load_channel](
             const lpv::SchedulingPoint& rho) {
    return lpv::MakeGeneralizedPlant(rho, params, weights, channel);
  };
}

synthesis::RobustData Uncertainty(const ToolkitConfig& c) {
  if (c.robust.matrices) return *c.robust.matrices;
  const synthesis::SynthesisProblem base = MakeProblem(c, false);
  return synthesis::MotorUncertainty(c.motor, simulation::Perturb(c.motor, c.robust.perturbation),
                                     base.box, base.scaling, c.robust.model, c.load_channel);
}

synthesis::SynthesisProblem MakeProblem(const ToolkitConfig& c, bool robust) {
  c.Validate();
  synthesis::SynthesisProblem p =
      synthesis::MotorSynthesisProblem(c.motor, c.weights, Box(c), c.load_channel);
  const SynthesisSettings& s = c.synthesis;
  p.grid_mode = s.grid_mode;
  p.counts = s.counts;
  p.lmi_margin = s.lmi_margin;
  p.pole_radius = s.pole_radius;
  p.decision_bound = s.decision_bound;
  p.gamma_backoff = s.gamma_backoff;
  p.scaling.time_scale = s.time_scale;
  p.scaling.state_scale = Eigen::Map<const Eigen::VectorXd>(s.state_scale.data(),
                                                            static_cast<int>(s.state_scale.size()));
  p.solver = s.solver;
  if (robust) {
    p.robust = Uncertainty(c);
    p.epsilon = c.robust.epsilon;
    p.epsilon_search.lower = c.robust.epsilon_lower;
    p.epsilon_search.upper = c.robust.epsilon_upper;
    p.epsilon_search.iterations = c.robust.epsilon_iterations;
    p.epsilon_search.counts = c.robust.epsilon_counts;
  }
  return p;
}

const simulation::Scenario& FindScenario(const ToolkitConfig& c, const std::string& name) {
  for (const simulation::Scenario& s : c.scenarios) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const simulation::Scenario& s : c.scenarios) known += (known.empty() ? "" : ", ") + s.name;
  throw ConfigError("unknown scenario '" + name + "' (configured: " + known + ")");
}

// ---------------------------------------------------------------------------

ControllerArtifact MakeArtifact(const ToolkitConfig& c, bool robust,
                                synthesis::SynthesisSolution solution) {
  return {c.motor, c.weights, c.load_channel, robust, std::move(solution)};
}

std::string SerializeArtifact(const ControllerArtifact& a) {
  json j;
  j["format"] = kArtifactFormat;
  j["schema_version"] = kArtifactVersion;
  j["robust"] = a.robust;
  j["motor"] = MotorToJson(a.motor);
  j["weights"] = WeightsToJson(a.weights);
  j["load_channel"] = ToString(a.load_channel);
  j["solution"] = json::parse(synthesis::SerializeSolution(a.solution));
  return j.dump(1) + "\n";
}

ControllerArtifact DeserializeArtifact(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("controller artifact is not valid JSON: ") + e.what());
  }
  return Rethrow([&] {
    ControllerArtifact a;
    JsonReader r(j, "");
    std::string format;
    int version = 0;
    r.Read("format", &format);
    if (format != kArtifactFormat) JsonReader::Fail("format", "not a controller artifact");
    r.Read("schema_version", &version);
    if (version != kArtifactVersion) {
      JsonReader::Fail("schema_version", "unsupported version " + std::to_string(version));
    }
    r.Read("robust", &a.robust);
    const json* m = r.Take("motor");
    const json* w = r.Take("weights");
    const json* s = r.Take("solution");
    if (!m || !w || !s) JsonReader::Fail(!m ? "motor" : !w ? "weights" : "solution", "missing");
    a.motor = MotorFromJson(*m, "motor");
    a.weights = WeightsFromJson(*w, "weights");
    ReadEnum(r, "load_channel", &a.load_channel, LoadChannelFromString);
    r.Finish();
    try {
      a.solution = synthesis::DeserializeSolution(s->dump());
    } catch (const std::invalid_argument& e) {
      JsonReader::Fail("solution", e.what());
    }
    return a;
  });
}

ControllerArtifact LoadArtifact(const std::string& path) {
  try {
    return DeserializeArtifact(ReadFile(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void CheckCompatible(const ControllerArtifact& a, const ToolkitConfig& c,
                     const std::string& artifact_name, const std::string& config_name) {
  auto fail = [&](const std::string& what) {
    throw ConfigError("artifact '" + artifact_name + "' and config '" + config_name +
                      "' disagree: " + what);
  };
  const int n = static_cast<int>(a.solution.X.rows());
  if (n != 4) {
    fail("artifact controller order " + std::to_string(n) +
         ", config motor model has 4 error states");
  }
  if (a.motor != c.motor) {
    fail("motor parameters differ (artifact " + MotorToJson(a.motor).dump() + ", config " +
         MotorToJson(c.motor).dump() + ")");
  }
  if (a.weights != c.weights) fail("performance weights differ");
  if (a.load_channel != c.load_channel) fail("load channel differs");
}

std::unique_ptr<controller::ControllerRealization> MakeController(const ControllerArtifact& a,
                                                                  const ToolkitConfig& c) {
  const controller::PlantFactory plant = [params = a.motor, weights = a.weights,
                                          channel = a.load_channel](
                                             const lpv::SchedulingPoint& rho) {
    return lpv::MakeGeneralizedPlant(rho, params, weights, channel);
  };
  auto k = std::make_unique<controller::ControllerRealization>(a.solution, plant,
                                                               c.controller.factorization);
  if (c.controller.interpolation_angles > 0) {
    k->EnableInterpolation(c.controller.interpolation_angles,
                           c.controller.interpolation_temperatures,
                           [params = a.motor](double t) {
                             return params.pole_pairs * motor::FluxAt(params, t);
                           });
  }
  return k;
}

}  // namespace config
}  // namespace pmsm_lpv
