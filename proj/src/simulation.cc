#include "pmsm_lpv/simulation.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>

#include "json_fields.h"

namespace pmsm_lpv {
namespace simulation {

using Eigen::VectorXd;
using internal::JsonReader;
using motor::kRpmToRadPerSec;

namespace {

// Quintic blend 10s³ − 15s⁴ + 6s⁵ and its first two derivatives.
struct Blend {
  double q, dq, ddq;
};

Blend QuinticBlend(double s) {
  const double s2 = s * s, s3 = s2 * s;
  return {s3 * (10.0 - 15.0 * s + 6.0 * s2), 30.0 * s2 * (1.0 - 2.0 * s + s2),
          60.0 * s * (1.0 - 3.0 * s + 2.0 * s2)};
}

// Profiles pick their active piece from `piece_time` and evaluate its formula
// at `t`. Inside one integrator step piece_time is the step midpoint, so
// every stage of the step sees the same smooth piece.

motor::ReferenceSample ReferenceAt(const ReferenceProfile& r, double t, double piece_time) {
  double level = r.initial_rpm;
  for (const SpeedStep& s : r.steps) {
    if (piece_time < s.time) break;
    if (piece_time < s.time + r.ramp_time) {
      const Blend b = QuinticBlend((t - s.time) / r.ramp_time);
      const double delta = (s.target_rpm - level) * kRpmToRadPerSec;
      return {level * kRpmToRadPerSec + delta * b.q, delta * b.dq / r.ramp_time,
              delta * b.ddq / (r.ramp_time * r.ramp_time)};
    }
    level = s.target_rpm;
  }
  return {level * kRpmToRadPerSec, 0.0, 0.0};
}

double LoadAt(const LoadProfile& l, double piece_time) {
  double value = l.initial;
  for (const LoadStep& s : l.steps) {
    if (piece_time < s.time) break;
    value = s.torque;
  }
  return value;
}

double TemperatureAt(const TemperatureProfile& p, double t, double piece_time) {
  const auto& pts = p.points;
  if (piece_time <= pts.front().time) return pts.front().temperature;
  if (piece_time >= pts.back().time) return pts.back().temperature;
  size_t i = 1;
  while (pts[i].time <= piece_time) ++i;
  const TemperaturePoint& a = pts[i - 1];
  const TemperaturePoint& b = pts[i];
  return a.temperature + (b.temperature - a.temperature) * (t - a.time) / (b.time - a.time);
}

}  // namespace

motor::ReferenceSample ReferenceProfile::At(double t) const { return ReferenceAt(*this, t, t); }

double ReferenceProfile::TargetRpmAt(double t) const {
  double level = initial_rpm;
  for (const SpeedStep& s : steps) {
    if (t < s.time) break;
    level = s.target_rpm;
  }
  return level;
}

double LoadProfile::At(double t) const { return LoadAt(*this, t); }

double TemperatureProfile::At(double t) const { return TemperatureAt(*this, t, t); }

double TemperatureProfile::Min() const {
  double m = points.front().temperature;
  for (const auto& p : points) m = std::min(m, p.temperature);
  return m;
}

double TemperatureProfile::Max() const {
  double m = points.front().temperature;
  for (const auto& p : points) m = std::max(m, p.temperature);
  return m;
}

bool PerturbationFactors::IsIdentity() const {
  return inductance == 1.0 && inertia == 1.0 && resistance == 1.0 && friction == 1.0;
}

PerturbationFactors WorstCasePerturbation() { return {2.0, 2.0, 1.0 / 1.5, 1.0 / 1.5}; }

motor::MotorParams Perturb(const motor::MotorParams& params, const PerturbationFactors& f) {
  if (!(f.inductance > 0.0 && f.inertia > 0.0 && f.resistance > 0.0 && f.friction > 0.0)) {
    throw std::invalid_argument("perturbation factors must be positive");
  }
  motor::MotorParams p = params;
  p.stator_inductance *= f.inductance;
  p.inertia *= f.inertia;
  p.stator_resistance_ref *= f.resistance;
  p.friction *= f.friction;
  return p;
}

void Scenario::Validate() const {
  auto fail = [this](const std::string& what) {
    throw std::invalid_argument("scenario '" + name + "': " + what);
  };
  if (!(step > 0.0)) fail("step must be positive");
  if (!(duration > 0.0)) fail("duration must be positive");
  if (duration < step) fail("duration must cover at least one step");
  if (decimation < 1) fail("decimation must be at least 1");
  const PerturbationFactors& f = perturbation;
  if (!(f.inductance > 0.0 && f.inertia > 0.0 && f.resistance > 0.0 && f.friction > 0.0)) {
    fail("perturbation factors must be positive");
  }
  if (!(reference.ramp_time > 0.0)) fail("ramp_time must be positive");
  double previous = -1e300;
  for (const SpeedStep& s : reference.steps) {
    if (s.time < 0.0 || s.time > duration) fail("reference step outside [0, duration]");
    if (s.time < previous + reference.ramp_time) {
      fail("reference steps must be ordered and at least ramp_time apart");
    }
    previous = s.time;
  }
  previous = -1e300;
  for (const LoadStep& s : load.steps) {
    if (s.time < 0.0 || s.time > duration) fail("load step outside [0, duration]");
    if (s.time <= previous) fail("load steps must be strictly increasing in time");
    previous = s.time;
  }
  if (temperature.points.empty()) fail("temperature profile needs at least one point");
  previous = -1e300;
  for (const TemperaturePoint& p : temperature.points) {
    if (p.time <= previous) fail("temperature points must be strictly increasing in time");
    if (!std::isfinite(p.temperature)) fail("temperature must be finite");
    previous = p.time;
  }
}

std::vector<double> Scenario::Breakpoints() const {
  std::vector<double> b;
  for (const SpeedStep& s : reference.steps) {
    b.push_back(s.time);
    b.push_back(s.time + reference.ramp_time);
  }
  for (const LoadStep& s : load.steps) b.push_back(s.time);
  for (const TemperaturePoint& p : temperature.points) b.push_back(p.time);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

Scenario StepScenario() {
  Scenario s;
  s.name = "step-nodist";
  s.reference.steps = {{0.1, 300.0}, {1.0, 100.0}};
  return s;
}

Scenario DisturbanceScenario() {
  Scenario s = StepScenario();
  s.name = "disturbance";
  s.load.steps = {{0.5, 0.1}, {1.5, 0.0}};
  s.temperature.points = {{0.0, 30.0}, {s.duration, 100.0}};
  return s;
}

Scenario PerturbedScenario() {
  Scenario s = DisturbanceScenario();
  s.name = "perturbed";
  s.perturbation = WorstCasePerturbation();
  return s;
}

std::vector<std::string> ScenarioNames() { return {"step-nodist", "disturbance", "perturbed"}; }

Scenario NamedScenario(const std::string& name) {
  if (name == "step-nodist") return StepScenario();
  if (name == "disturbance") return DisturbanceScenario();
  if (name == "perturbed") return PerturbedScenario();
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

nlohmann::json ToJson(const Scenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["duration"] = s.duration;
  j["step"] = s.step;
  j["decimation"] = s.decimation;
  nlohmann::json steps = nlohmann::json::array();
  for (const SpeedStep& st : s.reference.steps) {
    steps.push_back({{"time", st.time}, {"target_rpm", st.target_rpm}});
  }
  j["reference"] = {{"initial_rpm", s.reference.initial_rpm},
                    {"ramp_time", s.reference.ramp_time},
                    {"steps", steps}};
  nlohmann::json loads = nlohmann::json::array();
  for (const LoadStep& st : s.load.steps) loads.push_back({{"time", st.time}, {"torque", st.torque}});
  j["load"] = {{"initial", s.load.initial}, {"steps", loads}};
  nlohmann::json temps = nlohmann::json::array();
  for (const TemperaturePoint& p : s.temperature.points) {
    temps.push_back({{"time", p.time}, {"temperature", p.temperature}});
  }
  j["temperature"] = temps;
  j["perturbation"] = {{"inductance", s.perturbation.inductance},
                       {"inertia", s.perturbation.inertia},
                       {"resistance", s.perturbation.resistance},
                       {"friction", s.perturbation.friction}};
  j["initial_state"] = {{"theta", s.initial_state.theta},
                        {"omega", s.initial_state.omega},
                        {"i_alpha", s.initial_state.i_alpha},
                        {"i_beta", s.initial_state.i_beta}};
  return j;
}

namespace {

template <typename T>
std::vector<T> ReadArray(const nlohmann::json& j, const std::string& path,
                         const std::function<T(JsonReader&)>& element) {
  internal::RequireArray(j, path);
  std::vector<T> out;
  for (size_t i = 0; i < j.size(); ++i) {
    JsonReader r(j[i], internal::ElementPath(path, i));
    out.push_back(element(r));
    r.Finish();
  }
  return out;
}

}  // namespace

Scenario ScenarioFromJson(const nlohmann::json& j) {
  Scenario s;
  JsonReader r(j, "scenario");
  r.Read("name", &s.name);
  r.Read("duration", &s.duration);
  r.Read("step", &s.step);
  r.Read("decimation", &s.decimation);
  if (const nlohmann::json* ref = r.Take("reference")) {
    JsonReader rr(*ref, r.PathOf("reference"));
    rr.Read("initial_rpm", &s.reference.initial_rpm);
    rr.Read("ramp_time", &s.reference.ramp_time);
    if (const nlohmann::json* steps = rr.Take("steps")) {
      s.reference.steps = ReadArray<SpeedStep>(*steps, rr.PathOf("steps"), [](JsonReader& e) {
        SpeedStep st;
        e.Read("time", &st.time);
        e.Read("target_rpm", &st.target_rpm);
        return st;
      });
    }
    rr.Finish();
  }
  if (const nlohmann::json* load = r.Take("load")) {
    JsonReader lr(*load, r.PathOf("load"));
    lr.Read("initial", &s.load.initial);
    if (const nlohmann::json* steps = lr.Take("steps")) {
      s.load.steps = ReadArray<LoadStep>(*steps, lr.PathOf("steps"), [](JsonReader& e) {
        LoadStep st;
        e.Read("time", &st.time);
        e.Read("torque", &st.torque);
        return st;
      });
    }
    lr.Finish();
  }
  if (const nlohmann::json* temps = r.Take("temperature")) {
    s.temperature.points =
        ReadArray<TemperaturePoint>(*temps, r.PathOf("temperature"), [](JsonReader& e) {
          TemperaturePoint p;
          e.Read("time", &p.time);
          e.Read("temperature", &p.temperature);
          return p;
        });
  }
  if (const nlohmann::json* pert = r.Take("perturbation")) {
    JsonReader pr(*pert, r.PathOf("perturbation"));
    pr.Read("inductance", &s.perturbation.inductance);
    pr.Read("inertia", &s.perturbation.inertia);
    pr.Read("resistance", &s.perturbation.resistance);
    pr.Read("friction", &s.perturbation.friction);
    pr.Finish();
  }
  if (const nlohmann::json* init = r.Take("initial_state")) {
    JsonReader ir(*init, r.PathOf("initial_state"));
    ir.Read("theta", &s.initial_state.theta);
    ir.Read("omega", &s.initial_state.omega);
    ir.Read("i_alpha", &s.initial_state.i_alpha);
    ir.Read("i_beta", &s.initial_state.i_beta);
    ir.Finish();
  }
  r.Finish();
  s.Validate();
  return s;
}

std::string ScenarioHash(const Scenario& scenario) {
  // 64-bit FNV-1a over the canonical dump; object keys are sorted by the
  // json library and doubles print round-trip exactly.
  const std::string text = ToJson(scenario).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::pair<double, double> Park(double i_alpha, double i_beta, double angle) {
  const double s = std::sin(angle), c = std::cos(angle);
  return {c * i_alpha + s * i_beta, -s * i_alpha + c * i_beta};
}

std::pair<double, double> InversePark(double v_d, double v_q, double angle) {
  const double s = std::sin(angle), c = std::cos(angle);
  return {c * v_d - s * v_q, s * v_d + c * v_q};
}

FocPiOutput EvaluateFocPi(const FocPiState& state, const Measurements& m, double omega_ref,
                          const PiGains& gains, int pole_pairs) {
  const double angle = pole_pairs * m.theta;
  const auto [i_d, i_q] = Park(m.i_alpha, m.i_beta, angle);
  const double speed_error = omega_ref - m.omega;
  FocPiOutput out;
  out.i_q_ref = gains.speed_kp * speed_error + gains.speed_ki * state.speed_integral;
  const double d_error = -i_d;
  const double q_error = out.i_q_ref - i_q;
  const double v_d = gains.current_kp * d_error + gains.current_ki * state.d_integral;
  const double v_q = gains.current_kp * q_error + gains.current_ki * state.q_integral;
  std::tie(out.v_alpha, out.v_beta) = InversePark(v_d, v_q, angle);
  out.rate = {speed_error, d_error, q_error};
  return out;
}

FocPiController::FocPiController(PiGains gains, int pole_pairs)
    : gains_(gains), pole_pairs_(pole_pairs) {}

std::pair<double, double> FocPiController::Step(const Measurements& m, double omega_ref,
                                                double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const FocPiOutput out = EvaluateFocPi(state_, m, omega_ref, gains_, pole_pairs_);
  auto rate = [&](const FocPiState& s) { return EvaluateFocPi(s, m, omega_ref, gains_, pole_pairs_).rate; };
  auto add = [](const FocPiState& s, const FocPiState& d, double h) {
    return FocPiState{s.speed_integral + h * d.speed_integral, s.d_integral + h * d.d_integral,
                      s.q_integral + h * d.q_integral};
  };
  const FocPiState k1 = out.rate;
  const FocPiState k2 = rate(add(state_, k1, 0.5 * dt));
  const FocPiState k3 = rate(add(state_, k2, 0.5 * dt));
  const FocPiState k4 = rate(add(state_, k3, dt));
  state_.speed_integral +=
      dt / 6.0 * (k1.speed_integral + 2 * k2.speed_integral + 2 * k3.speed_integral + k4.speed_integral);
  state_.d_integral += dt / 6.0 * (k1.d_integral + 2 * k2.d_integral + 2 * k3.d_integral + k4.d_integral);
  state_.q_integral += dt / 6.0 * (k1.q_integral + 2 * k2.q_integral + 2 * k3.q_integral + k4.q_integral);
  return {out.v_alpha, out.v_beta};
}

// ---------------------------------------------------------------------------

std::string ToString(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kLpv: return "lpv";
    case ControllerKind::kFocPi: return "foc-pi";
    case ControllerKind::kFeedforward: return "feedforward";
  }
  return "unknown";
}

namespace {

// Joint state layout: θ, ω, i_α, i_β, e_z, then the controller states.
constexpr int kPlantStates = 5;

struct Inputs {
  motor::ReferenceSample ref;
  double load{0.0};
  double temperature{0.0};
};

Inputs InputsAt(const Scenario& s, double t, double piece_time) {
  return {ReferenceAt(s.reference, t, piece_time), LoadAt(s.load, piece_time),
          TemperatureAt(s.temperature, t, piece_time)};
}

// Derivative of the joint state and, when `sample` is set, the recorded
// signals at that state.
using Dynamics = std::function<void(const Inputs&, const VectorXd&, VectorXd*, TraceSample*)>;

struct LoopData {
  const motor::MotorParams& nominal;
  motor::MotorParams plant;
};

// Tracking errors and feedforward voltages shared by every controller.
struct Tracking {
  motor::FeedforwardOutput ff;
  motor::ErrorState error;
};

Tracking TrackingAt(const Inputs& in, const VectorXd& x, const motor::MotorParams& nominal) {
  Tracking tr;
  tr.ff = motor::Feedforward(in.ref, x(0), x(1), in.temperature, 0.0, 0.0, nominal);
  tr.error = {x(4), in.ref.omega_ref - x(1), tr.ff.i_alpha_ref - x(2), tr.ff.i_beta_ref - x(3)};
  return tr;
}

void PlantPart(const Inputs& in, const VectorXd& x, double v_alpha, double v_beta,
               const motor::MotorParams& plant, double e_omega, VectorXd* dx) {
  const motor::MotorState d =
      motor::PlantDerivative({x(0), x(1), x(2), x(3)}, v_alpha, v_beta, in.load, in.temperature, plant);
  (*dx)(0) = d.theta;
  (*dx)(1) = d.omega;
  (*dx)(2) = d.i_alpha;
  (*dx)(3) = d.i_beta;
  (*dx)(4) = e_omega;
}

void Record(const Inputs& in, const VectorXd& x, const Tracking& tr, double u_alpha,
            double u_beta, double v_alpha, double v_beta, const motor::MotorParams& nominal,
            TraceSample* s) {
  s->state = {x(0), x(1), x(2), x(3)};
  s->error = tr.error;
  s->u_alpha = u_alpha;
  s->u_beta = u_beta;
  s->v_alpha = v_alpha;
  s->v_beta = v_beta;
  s->load = in.load;
  s->temperature = in.temperature;
  s->rho = lpv::SchedulingFromUnchecked(x(0), in.temperature, nominal);
  s->omega_ref = in.ref.omega_ref;
}

bool Diverged(const VectorXd& x) {
  for (int i = 0; i < x.size(); ++i) {
    if (!(std::abs(x(i)) <= kDivergenceThreshold)) return true;
  }
  return false;
}

SimTrace Run(const Scenario& scenario, int controller_states, const std::string& label,
             const Dynamics& dynamics) {
  scenario.Validate();
  SimTrace trace;
  trace.controller = label;
  trace.scenario = scenario;
  trace.scenario_hash = ScenarioHash(scenario);
  const double h = scenario.step;
  trace.sample_interval = h * scenario.decimation;
  const long long steps = std::llround(scenario.duration / h);

  VectorXd x = VectorXd::Zero(kPlantStates + controller_states);
  x(0) = scenario.initial_state.theta;
  x(1) = scenario.initial_state.omega;
  x(2) = scenario.initial_state.i_alpha;
  x(3) = scenario.initial_state.i_beta;
  VectorXd k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size());

  auto record = [&](double t, double piece_time) {
    TraceSample s;
    s.time = t;
    VectorXd unused(x.size());
    dynamics(InputsAt(scenario, t, piece_time), x, &unused, &s);
    trace.samples.push_back(s);
  };

  trace.samples.reserve(static_cast<size_t>(steps / scenario.decimation + 2));
  for (long long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const double mid = t + 0.5 * h;
    if (k % scenario.decimation == 0) record(t, mid);
    dynamics(InputsAt(scenario, t, mid), x, &k1, nullptr);
    dynamics(InputsAt(scenario, mid, mid), x + 0.5 * h * k1, &k2, nullptr);
    dynamics(InputsAt(scenario, mid, mid), x + 0.5 * h * k2, &k3, nullptr);
    dynamics(InputsAt(scenario, t + h, mid), x + h * k3, &k4, nullptr);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (Diverged(x)) {
      trace.divergent = true;
      trace.abort_time = t + h;
      return trace;
    }
  }
  if (steps % scenario.decimation == 0) {
    const double t = static_cast<double>(steps) * h;
    record(t, t);
  }
  return trace;
}

}  // namespace

SimTrace SimulateLpv(const Scenario& scenario,
                     const controller::ControllerRealization& controller,
                     const motor::MotorParams& nominal) {
  if (controller.order() != 4) {
    throw std::invalid_argument("controller order " + std::to_string(controller.order()) +
                                " does not match the 4 error states of the motor model");
  }
  const lpv::ParameterBox& box = controller.solution().box;
  if (scenario.temperature.Min() < box.lower[2] - 1e-9 ||
      scenario.temperature.Max() > box.upper[2] + 1e-9) {
    throw std::invalid_argument("scenario temperatures leave the controller's range [" +
                                std::to_string(box.lower[2]) + ", " +
                                std::to_string(box.upper[2]) + "] °C");
  }
  const motor::MotorParams plant = Perturb(nominal, scenario.perturbation);
  const int nk = controller.order();
  const Dynamics dynamics = [&](const Inputs& in, const VectorXd& x, VectorXd* dx,
                                TraceSample* sample) {
    const Tracking tr = TrackingAt(in, x, nominal);
    const lpv::SchedulingPoint rho = lpv::SchedulingFromUnchecked(x(0), in.temperature, nominal);
    const controller::ControllerMatrices k = controller.MatricesAt(rho);
    const Eigen::Vector2d y(tr.error.e_z, tr.error.e_omega);
    const auto x_k = x.segment(kPlantStates, nk);
    const Eigen::Vector2d u = k.C_K * x_k + k.D_K * y;
    const double v_alpha = tr.ff.v_alpha - u(0);
    const double v_beta = tr.ff.v_beta - u(1);
    PlantPart(in, x, v_alpha, v_beta, plant, tr.error.e_omega, dx);
    dx->segment(kPlantStates, nk) = k.A_K * x_k + k.B_K * y;
    if (sample) Record(in, x, tr, u(0), u(1), v_alpha, v_beta, nominal, sample);
  };
  return Run(scenario, nk, ToString(ControllerKind::kLpv), dynamics);
}

SimTrace SimulateFocPi(const Scenario& scenario, const PiGains& gains,
                       const motor::MotorParams& nominal) {
  const motor::MotorParams plant = Perturb(nominal, scenario.perturbation);
  const Dynamics dynamics = [&](const Inputs& in, const VectorXd& x, VectorXd* dx,
                                TraceSample* sample) {
    const Tracking tr = TrackingAt(in, x, nominal);
    const FocPiState state{x(5), x(6), x(7)};
    const FocPiOutput out =
        EvaluateFocPi(state, {x(0), x(1), x(2), x(3)}, in.ref.omega_ref, gains, nominal.pole_pairs);
    PlantPart(in, x, out.v_alpha, out.v_beta, plant, tr.error.e_omega, dx);
    (*dx)(5) = out.rate.speed_integral;
    (*dx)(6) = out.rate.d_integral;
    (*dx)(7) = out.rate.q_integral;
    if (sample) Record(in, x, tr, 0.0, 0.0, out.v_alpha, out.v_beta, nominal, sample);
  };
  return Run(scenario, 3, ToString(ControllerKind::kFocPi), dynamics);
}

SimTrace SimulateFeedforward(const Scenario& scenario, const motor::MotorParams& nominal) {
  const motor::MotorParams plant = Perturb(nominal, scenario.perturbation);
  const Dynamics dynamics = [&](const Inputs& in, const VectorXd& x, VectorXd* dx,
                                TraceSample* sample) {
    const Tracking tr = TrackingAt(in, x, nominal);
    PlantPart(in, x, tr.ff.v_alpha, tr.ff.v_beta, plant, tr.error.e_omega, dx);
    if (sample) Record(in, x, tr, 0.0, 0.0, tr.ff.v_alpha, tr.ff.v_beta, nominal, sample);
  };
  return Run(scenario, 0, ToString(ControllerKind::kFeedforward), dynamics);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kRadPerSecToRpm = 1.0 / kRpmToRadPerSec;

// Samples in [start, end] as index range [first, last).
std::pair<size_t, size_t> Window(const SimTrace& trace, double start, double end) {
  const auto& s = trace.samples;
  const double eps = 1e-9 * trace.sample_interval;
  size_t first = 0;
  while (first < s.size() && s[first].time < start - eps) ++first;
  size_t last = first;
  while (last < s.size() && s[last].time <= end + eps) ++last;
  return {first, last};
}

// ∫(t − origin)^power |e_ω| dt by the trapezoidal rule, and ∫e_ω² dt.
struct ErrorIntegrals {
  double itae{0.0};
  double square{0.0};
  double peak{0.0};
};

ErrorIntegrals Integrate(const SimTrace& trace, size_t first, size_t last, double origin) {
  ErrorIntegrals out;
  const auto& s = trace.samples;
  for (size_t i = first; i < last; ++i) {
    out.peak = std::max(out.peak, std::abs(s[i].error.e_omega));
    if (i + 1 >= last) break;
    const double dt = s[i + 1].time - s[i].time;
    const double a = std::abs(s[i].error.e_omega), b = std::abs(s[i + 1].error.e_omega);
    out.itae += 0.5 * dt * ((s[i].time - origin) * a + (s[i + 1].time - origin) * b);
    out.square += 0.5 * dt * (a * a + b * b);
  }
  return out;
}

double Rms(const ErrorIntegrals& e, double span) {
  return span > 0.0 ? std::sqrt(e.square / span) : 0.0;
}

}  // namespace

Metrics ComputeMetrics(const SimTrace& trace) {
  if (trace.divergent) throw std::invalid_argument("metrics of a divergent trace");
  if (trace.samples.empty()) throw std::invalid_argument("metrics of an empty trace");
  const Scenario& sc = trace.scenario;
  const double t_end = trace.samples.back().time;

  std::vector<double> events;
  for (const SpeedStep& s : sc.reference.steps) events.push_back(s.time);
  for (const LoadStep& s : sc.load.steps) events.push_back(s.time);
  std::sort(events.begin(), events.end());
  auto next_event = [&](double t) {
    for (double e : events) {
      if (e > t) return std::min(e, t_end);
    }
    return t_end;
  };

  Metrics m;
  double level = sc.reference.initial_rpm;
  for (const SpeedStep& step : sc.reference.steps) {
    StepMetrics sm;
    sm.start = step.time;
    sm.end = next_event(step.time);
    sm.from_rpm = level;
    sm.to_rpm = step.target_rpm;
    level = step.target_rpm;
    const auto [first, last] = Window(trace, sm.start, sm.end);
    const double delta = sm.to_rpm - sm.from_rpm;
    const double sign = delta >= 0.0 ? 1.0 : -1.0;
    const double band = 0.02 * std::abs(delta);
    double t10 = kUnsettled, t90 = kUnsettled;
    size_t last_outside = first;
    bool any_outside = false;
    for (size_t i = first; i < last; ++i) {
      const TraceSample& s = trace.samples[i];
      const double w = s.state.omega * kRadPerSecToRpm;
      if (delta != 0.0) {
        sm.overshoot_percent =
            std::max(sm.overshoot_percent, 100.0 * sign * (w - sm.to_rpm) / std::abs(delta));
        const double progress = (w - sm.from_rpm) / delta;
        auto crossing = [&](double level_fraction) {
          if (i == first) return s.time;
          const TraceSample& p = trace.samples[i - 1];
          const double prev = (p.state.omega * kRadPerSecToRpm - sm.from_rpm) / delta;
          return p.time + (s.time - p.time) * (level_fraction - prev) / (progress - prev);
        };
        if (t10 == kUnsettled && progress >= 0.1) t10 = crossing(0.1);
        if (t90 == kUnsettled && progress >= 0.9) t90 = crossing(0.9);
      }
      if (std::abs(w - sm.to_rpm) > band) {
        last_outside = i;
        any_outside = true;
      }
    }
    sm.rise_time = (t10 != kUnsettled && t90 != kUnsettled) ? t90 - t10 : kUnsettled;
    if (!any_outside) {
      sm.settled = true;
      sm.settling_time = 0.0;
    } else if (last_outside + 1 < last) {
      sm.settled = true;
      sm.settling_time = trace.samples[last_outside + 1].time - sm.start;
    } else {
      sm.settled = false;
      sm.settling_time = kUnsettled;
    }
    const auto [tail_first, tail_last] = Window(trace, std::max(sm.start, sm.end - 0.1), sm.end);
    for (size_t i = tail_first; i < tail_last; ++i) {
      sm.steady_state_error_rpm = std::max(
          sm.steady_state_error_rpm, std::abs(trace.samples[i].error.e_omega) * kRadPerSecToRpm);
    }
    const ErrorIntegrals e = Integrate(trace, first, last, sm.start);
    sm.itae = e.itae;
    sm.rms_error_rpm = Rms(e, sm.end - sm.start) * kRadPerSecToRpm;
    m.peak_overshoot_percent = std::max(m.peak_overshoot_percent, sm.overshoot_percent);
    m.steps.push_back(sm);
  }

  for (const LoadStep& step : sc.load.steps) {
    DisturbanceMetrics dm;
    dm.start = step.time;
    dm.end = next_event(step.time);
    const auto [first, last] = Window(trace, dm.start, dm.end);
    const ErrorIntegrals e = Integrate(trace, first, last, dm.start);
    dm.peak_deviation_rpm = e.peak * kRadPerSecToRpm;
    dm.itae = e.itae;
    dm.rms_error_rpm = Rms(e, dm.end - dm.start) * kRadPerSecToRpm;
    m.disturbances.push_back(dm);
  }

  const ErrorIntegrals total = Integrate(trace, 0, trace.samples.size(), 0.0);
  m.itae = total.itae;
  m.rms_error_rpm = Rms(total, t_end - trace.samples.front().time) * kRadPerSecToRpm;
  return m;
}

nlohmann::json ToJson(const Metrics& m) {
  nlohmann::json j;
  j["itae_rad"] = m.itae;
  j["rms_error_rpm"] = m.rms_error_rpm;
  j["peak_overshoot_percent"] = m.peak_overshoot_percent;
  j["steps"] = nlohmann::json::array();
  for (const StepMetrics& s : m.steps) {
    j["steps"].push_back({{"start_s", s.start},
                          {"end_s", s.end},
                          {"from_rpm", s.from_rpm},
                          {"to_rpm", s.to_rpm},
                          {"overshoot_percent", s.overshoot_percent},
                          {"rise_time_s", s.rise_time},
                          {"settling_time_s", s.settling_time},
                          {"settled", s.settled},
                          {"steady_state_error_rpm", s.steady_state_error_rpm},
                          {"itae_rad", s.itae},
                          {"rms_error_rpm", s.rms_error_rpm}});
  }
  j["disturbances"] = nlohmann::json::array();
  for (const DisturbanceMetrics& d : m.disturbances) {
    j["disturbances"].push_back({{"start_s", d.start},
                                 {"end_s", d.end},
                                 {"peak_deviation_rpm", d.peak_deviation_rpm},
                                 {"itae_rad", d.itae},
                                 {"rms_error_rpm", d.rms_error_rpm}});
  }
  return j;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& TraceColumns() {
  static const std::vector<std::string> columns = {
      "time_s",        "theta_rad",     "omega_rad_s",     "omega_rpm",     "i_alpha_A",
      "i_beta_A",      "e_z_rad",       "e_omega_rad_s",   "e_omega_rpm",   "e_alpha_A",
      "e_beta_A",      "u_alpha_V",     "u_beta_V",        "v_alpha_V",     "v_beta_V",
      "load_Nm",       "temperature_C", "rho1_Wb",         "rho2_Wb",       "rho3_C",
      "omega_ref_rad_s", "omega_ref_rpm"};
  return columns;
}

namespace {

void AppendNumber(std::string* out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out->append(buf);
}

std::vector<double> Row(const TraceSample& s) {
  return {s.time,          s.state.theta,     s.state.omega, s.state.omega * kRadPerSecToRpm,
          s.state.i_alpha, s.state.i_beta,    s.error.e_z,   s.error.e_omega,
          s.error.e_omega * kRadPerSecToRpm,  s.error.e_alpha, s.error.e_beta,
          s.u_alpha,       s.u_beta,          s.v_alpha,     s.v_beta,
          s.load,          s.temperature,     s.rho.rho1,    s.rho.rho2,
          s.rho.rho3,      s.omega_ref,       s.omega_ref * kRadPerSecToRpm};
}

std::string HeaderLines(const SimTrace& trace) {
  std::string out = "# pmsm_lpv trace 1\n";
  out += "# controller: " + trace.controller + "\n";
  out += "# scenario_hash: " + trace.scenario_hash + "\n";
  out += "# scenario: " + ToJson(trace.scenario).dump() + "\n";
  out += "# sample_interval: ";
  AppendNumber(&out, trace.sample_interval);
  out += "\n# divergent: ";
  out += trace.divergent ? "true" : "false";
  out += "\n# abort_time: ";
  AppendNumber(&out, trace.abort_time);
  out += "\n";
  return out;
}

}  // namespace

std::string TraceToCsv(const SimTrace& trace) {
  std::string out = HeaderLines(trace);
  const auto& cols = TraceColumns();
  for (size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const TraceSample& s : trace.samples) {
    const std::vector<double> row = Row(s);
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      AppendNumber(&out, row[i]);
    }
    out += '\n';
  }
  return out;
}

SimTrace TraceFromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  SimTrace trace;
  auto fail = [](const std::string& what) { throw std::invalid_argument("trace: " + what); };
  auto value_of = [](const std::string& l, const std::string& key) -> std::optional<std::string> {
    const std::string prefix = "# " + key + ": ";
    if (l.rfind(prefix, 0) != 0) return std::nullopt;
    return l.substr(prefix.size());
  };
  bool have_header = false, have_scenario = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (auto v = value_of(line, "controller")) trace.controller = *v;
      else if (auto v = value_of(line, "scenario_hash")) trace.scenario_hash = *v;
      else if (auto v = value_of(line, "scenario")) {
        try {
          trace.scenario = ScenarioFromJson(nlohmann::json::parse(*v));
        } catch (const nlohmann::json::exception& e) {
          fail(std::string("scenario line: ") + e.what());
        }
        have_scenario = true;
      } else if (auto v = value_of(line, "sample_interval")) trace.sample_interval = std::stod(*v);
      else if (auto v = value_of(line, "divergent")) trace.divergent = *v == "true";
      else if (auto v = value_of(line, "abort_time")) trace.abort_time = std::stod(*v);
      continue;
    }
    if (!have_header) {
      std::string expected;
      const auto& cols = TraceColumns();
      for (size_t i = 0; i < cols.size(); ++i) expected += (i ? "," : "") + cols[i];
      if (line != expected) fail("unexpected column header");
      have_header = true;
      continue;
    }
    std::vector<double> v;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      char* end = nullptr;
      v.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str() || *end != '\0') fail("malformed number '" + cell + "'");
    }
    if (v.size() != TraceColumns().size()) fail("row with " + std::to_string(v.size()) + " cells");
    TraceSample s;
    s.time = v[0];
    s.state = {v[1], v[2], v[4], v[5]};
    s.error = {v[6], v[7], v[9], v[10]};
    s.u_alpha = v[11];
    s.u_beta = v[12];
    s.v_alpha = v[13];
    s.v_beta = v[14];
    s.load = v[15];
    s.temperature = v[16];
    s.rho = {v[17], v[18], v[19]};
    s.omega_ref = v[20];
    trace.samples.push_back(s);
  }
  if (!have_header) fail("missing column header");
  if (!have_scenario) fail("missing scenario line");
  if (trace.scenario_hash != ScenarioHash(trace.scenario)) fail("scenario hash does not match");
  return trace;
}

std::string TraceToLongCsv(const SimTrace& trace) {
  std::string out = "# scenario_hash: " + trace.scenario_hash + "\n# controller: " +
                    trace.controller + "\ntime_s,series,value\n";
  const std::vector<std::pair<std::string, std::function<double(const TraceSample&)>>> series = {
      {"omega_rpm", [](const TraceSample& s) { return s.state.omega * kRadPerSecToRpm; }},
      {"omega_ref_rpm", [](const TraceSample& s) { return s.omega_ref * kRadPerSecToRpm; }},
      {"e_omega_rpm", [](const TraceSample& s) { return s.error.e_omega * kRadPerSecToRpm; }},
      {"i_alpha_A", [](const TraceSample& s) { return s.state.i_alpha; }},
      {"i_beta_A", [](const TraceSample& s) { return s.state.i_beta; }},
      {"u_alpha_V", [](const TraceSample& s) { return s.u_alpha; }},
      {"u_beta_V", [](const TraceSample& s) { return s.u_beta; }},
      {"v_alpha_V", [](const TraceSample& s) { return s.v_alpha; }},
      {"v_beta_V", [](const TraceSample& s) { return s.v_beta; }},
      {"load_Nm", [](const TraceSample& s) { return s.load; }},
      {"temperature_C", [](const TraceSample& s) { return s.temperature; }}};
  for (const auto& [name, get] : series) {
    for (const TraceSample& s : trace.samples) {
      AppendNumber(&out, s.time);
      out += "," + name + ",";
      AppendNumber(&out, get(s));
      out += '\n';
    }
  }
  return out;
}

}  // namespace simulation
}  // namespace pmsm_lpv
