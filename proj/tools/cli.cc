#include "cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "pmsm_lpv/config.h"
#include "pmsm_lpv/controller_runtime.h"
#include "pmsm_lpv/lmi_synthesis.h"

namespace pmsm_lpv {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMetricsFormat = "pmsm_lpv.metrics";
constexpr const char* kComparisonFormat = "pmsm_lpv.comparison";

class Timer {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string CountsText(const std::array<int, 3>& c) {
  return std::to_string(c[0]) + "x" + std::to_string(c[1]) + "x" + std::to_string(c[2]);
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config::ConfigError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Settings shared by the subcommands that read a config.
struct Common {
  std::string config_path;
  std::string output_dir;

  config::ToolkitConfig Load() const {
    return config_path.empty() ? config::ToolkitConfig{} : config::LoadConfig(config_path);
  }
  std::string ConfigName() const { return config_path.empty() ? "<defaults>" : config_path; }

  // Flag, then environment, then config.
  fs::path OutputDir(const config::ToolkitConfig& c) const {
    fs::path dir = c.output_dir;
    if (const char* env = std::getenv(kOutputDirVariable); env && *env) dir = env;
    if (!output_dir.empty()) dir = output_dir;
    fs::create_directories(dir);
    return dir;
  }
};

void AddCommon(CLI::App* app, Common* common) {
  app->add_option("-c,--config", common->config_path,
                  "Configuration file (JSON); built-in defaults when omitted");
  app->add_option("-o,--output-dir", common->output_dir,
                  std::string("Output directory; overrides ") + kOutputDirVariable +
                      " and the config");
}

// ---------------------------------------------------------------------------

struct Certificate {
  double worst_ratio{0.0};  // max frozen H∞ norm / γ
  int points{0};
  bool passed{false};
  std::string error;
};

Certificate FrozenCertificate(const synthesis::SynthesisSolution& solution,
                              const controller::PlantFactory& plant,
                              const std::vector<lpv::SchedulingPoint>& grid) {
  Certificate c;
  try {
    for (const lpv::SchedulingPoint& rho : grid) {
      const controller::ControllerMatrices k = controller::Reconstruct(solution, plant, rho);
      const double norm = controller::FrozenHinfNorm(controller::ClosedLoop(plant(rho), k));
      c.worst_ratio = std::max(c.worst_ratio, norm / solution.gamma);
      ++c.points;
    }
    c.passed = c.worst_ratio <= 1.0 + 1e-6;
  } catch (const std::exception& e) {
    c.error = e.what();
  }
  return c;
}

json VerificationToJson(const synthesis::VerificationReport& r, const std::array<int, 3>& counts) {
  return {{"counts", json::array({counts[0], counts[1], counts[2]})},
          {"points", r.points.size()},
          {"passed", r.passed},
          {"failed_points", r.num_failed},
          {"threshold", r.threshold},
          {"worst_performance_margin", r.worst_performance},
          {"worst_coupling_margin", r.worst_coupling},
          {"worst_pole_region_margin",
           std::isfinite(r.worst_pole_region) ? json(r.worst_pole_region) : json(nullptr)}};
}

std::string RenderSynthesisReport(const json& r) {
  std::ostringstream s;
  s << "pmsm_lpv synthesis report\n";
  s << "design: " << r.at("design").get<std::string>() << "\n";
  s << "status: " << r.at("status").get<std::string>() << "\n";
  if (r.contains("worst_constraint")) {
    s << "most violated constraint: " << r.at("worst_constraint").get<std::string>()
      << " (normalized residual " << r.at("worst_residual").get<double>() << ")\n";
  }
  if (r.contains("message")) s << "message: " << r.at("message").get<std::string>() << "\n";
  if (r.contains("gamma")) {
    s << "gamma: " << Format("%.10g", r.at("gamma").get<double>()) << "\n";
    s << "gamma before backoff: " << Format("%.10g", r.at("gamma_optimal").get<double>()) << "\n";
    s << "epsilon: "
      << (r.at("epsilon").is_null() ? std::string("-") : Format("%.6g", r.at("epsilon").get<double>()))
      << "\n";
    const json& solver = r.at("solver");
    s << "solver: " << solver.at("status").get<std::string>() << ", "
      << solver.at("iterations").get<int>() << " iterations, relative gap "
      << Format("%.3g", solver.at("relative_gap").get<double>()) << "\n";
  }
  for (const char* key : {"training", "verification"}) {
    if (!r.contains(key)) continue;
    const json& v = r.at(key);
    const auto c = v.at("counts");
    s << key << " grid " << c[0] << "x" << c[1] << "x" << c[2] << " (" << v.at("points")
      << " points): " << (v.at("passed").get<bool>() ? "passed" : "FAILED")
      << ", worst performance margin " << Format("%.4g", v.at("worst_performance_margin").get<double>())
      << ", coupling " << Format("%.4g", v.at("worst_coupling_margin").get<double>());
    if (!v.at("worst_pole_region_margin").is_null()) {
      s << ", pole region " << Format("%.4g", v.at("worst_pole_region_margin").get<double>());
    }
    s << ", threshold " << Format("%.3g", v.at("threshold").get<double>()) << ", failed "
      << v.at("failed_points") << "\n";
  }
  if (r.contains("certificate")) {
    const json& c = r.at("certificate");
    s << "frozen certificate: " << (c.at("passed").get<bool>() ? "passed" : "FAILED")
      << ", max H-infinity norm / gamma " << Format("%.6f", c.at("worst_ratio").get<double>())
      << " over " << c.at("points") << " points";
    if (c.contains("error")) s << " (" << c.at("error").get<std::string>() << ")";
    s << "\n";
  }
  if (r.contains("timings_s")) {
    s << "timings:";
    for (const auto& [k, v] : r.at("timings_s").items()) s << " " << k << " " << Format("%.2f", v.get<double>()) << " s";
    s << "\n";
  }
  if (r.contains("artifact")) s << "artifact: " << r.at("artifact").get<std::string>() << "\n";
  return s.str();
}

// Verification and certificate of a solution, with the exit code they imply.
struct Checks {
  json training, verification, certificate;
  double verify_seconds{0.0}, certificate_seconds{0.0};
  bool passed{false};
};

Checks CheckSolution(const synthesis::SynthesisSolution& solution,
                     const config::ToolkitConfig& c, const std::array<int, 3>& verify_counts) {
  const synthesis::SynthesisProblem problem = config::MakeProblem(c, false);
  const auto rates = synthesis::RateVertices(solution.box);
  Checks out;
  Timer t;
  const synthesis::VerificationReport train =
      synthesis::VerifySolution(solution, problem.plant, problem.Grid(solution.counts), rates);
  const synthesis::VerificationReport fine =
      synthesis::VerifySolution(solution, problem.plant, problem.Grid(verify_counts), rates);
  out.verify_seconds = t.Seconds();
  out.training = VerificationToJson(train, solution.counts);
  out.verification = VerificationToJson(fine, verify_counts);
  Timer t2;
  const Certificate cert =
      FrozenCertificate(solution, problem.plant, problem.Grid(solution.counts));
  out.certificate_seconds = t2.Seconds();
  out.certificate = {{"passed", cert.passed}, {"worst_ratio", cert.worst_ratio}, {"points", cert.points}};
  if (!cert.error.empty()) out.certificate["error"] = cert.error;
  out.passed = train.passed && fine.passed && cert.passed;
  return out;
}

int Synthesize(const Common& common, bool robust, std::ostream& out, std::ostream& err) {
  const config::ToolkitConfig c = common.Load();
  const fs::path dir = common.OutputDir(c);
  const std::string design = robust ? "robust" : "nominal";
  const fs::path report_stem = dir / ("synthesis_" + design + "_report");
  json report = {{"format", "pmsm_lpv.synthesis_report"}, {"schema_version", 1}, {"design", design}};
  auto finish = [&](int code) {
    WriteFile(report_stem.string() + ".json", report.dump(1) + "\n");
    const std::string text = RenderSynthesisReport(report);
    WriteFile(report_stem.string() + ".txt", text);
    (code == kOk ? out : err) << text;
    return code;
  };

  const synthesis::SynthesisProblem problem = config::MakeProblem(c, robust);
  err << "synthesizing the " << design << " design on a " << CountsText(problem.counts) << " "
      << synthesis::ToString(problem.grid_mode) << " grid\n";
  Timer t;
  synthesis::SynthesisSolution solution;
  try {
    solution = synthesis::Synthesize(problem);
  } catch (const synthesis::InfeasibleError& e) {
    report["status"] = "infeasible";
    report["worst_constraint"] = e.worst_label();
    report["worst_residual"] = e.worst_residual();
    report["message"] = e.what();
    return finish(kInfeasible);
  } catch (const synthesis::SolverError& e) {
    report["status"] = "solver_failure";
    report["message"] = e.what();
    return finish(kSolverFailure);
  }
  const double synth_seconds = t.Seconds();

  const fs::path artifact_path = dir / ("controller_" + design + ".json");
  WriteFile(artifact_path, config::SerializeArtifact(config::MakeArtifact(c, robust, solution)));

  const Checks checks = CheckSolution(solution, c, c.synthesis.verify_counts);
  report["status"] = checks.passed ? "verified" : "verification_failed";
  report["gamma"] = solution.gamma;
  report["gamma_optimal"] = solution.gamma_optimal;
  report["epsilon"] = solution.epsilon ? json(*solution.epsilon) : json(nullptr);
  report["solver"] = {{"status", solution.solver_status},
                      {"iterations", solution.solver_iterations},
                      {"relative_gap", solution.relative_gap},
                      {"primal_infeasibility", solution.primal_infeasibility},
                      {"dual_infeasibility", solution.dual_infeasibility}};
  report["training"] = checks.training;
  report["verification"] = checks.verification;
  report["certificate"] = checks.certificate;
  report["timings_s"] = {{"synthesis", synth_seconds},
                         {"verification", checks.verify_seconds},
                         {"certificate", checks.certificate_seconds}};
  report["artifact"] = artifact_path.string();
  return finish(checks.passed ? kOk : kVerificationFailed);
}

int Verify(const Common& common, const std::string& artifact_path,
           const std::vector<int>& counts_flag, std::ostream& out, std::ostream& err) {
  const config::ToolkitConfig c = common.Load();
  const config::ControllerArtifact a = config::LoadArtifact(artifact_path);
  config::CheckCompatible(a, c, artifact_path, common.ConfigName());
  std::array<int, 3> counts = c.synthesis.verify_counts;
  if (!counts_flag.empty()) {
    if (counts_flag.size() != 3 || *std::min_element(counts_flag.begin(), counts_flag.end()) < 1) {
      throw CLI::ValidationError("--counts", "expects three positive integers");
    }
    counts = {counts_flag[0], counts_flag[1], counts_flag[2]};
  }
  const Checks checks = CheckSolution(a.solution, c, counts);
  json report = {{"format", "pmsm_lpv.verification_report"},
                 {"schema_version", 1},
                 {"design", a.robust ? "robust" : "nominal"},
                 {"status", checks.passed ? "verified" : "verification_failed"},
                 {"gamma", a.solution.gamma},
                 {"gamma_optimal", a.solution.gamma_optimal},
                 {"epsilon", a.solution.epsilon ? json(*a.solution.epsilon) : json(nullptr)},
                 {"solver",
                  {{"status", a.solution.solver_status},
                   {"iterations", a.solution.solver_iterations},
                   {"relative_gap", a.solution.relative_gap}}},
                 {"training", checks.training},
                 {"verification", checks.verification},
                 {"certificate", checks.certificate},
                 {"timings_s",
                  {{"verification", checks.verify_seconds},
                   {"certificate", checks.certificate_seconds}}}};
  const fs::path dir = common.OutputDir(c);
  const std::string stem = fs::path(artifact_path).stem().string();
  WriteFile(dir / (stem + "_verification.json"), report.dump(1) + "\n");
  const std::string text = RenderSynthesisReport(report);
  (checks.passed ? out : err) << text;
  return checks.passed ? kOk : kVerificationFailed;
}

// ---------------------------------------------------------------------------

int Simulate(const Common& common, const std::string& artifact_path, bool baseline_pi,
             const std::string& scenario_name, std::string label, std::ostream& out,
             std::ostream& err) {
  const config::ToolkitConfig c = common.Load();
  const simulation::Scenario& scenario = config::FindScenario(c, scenario_name);
  simulation::SimTrace trace;
  json artifact_info = nullptr;
  Timer t;
  if (baseline_pi) {
    if (label.empty()) label = simulation::ToString(simulation::ControllerKind::kFocPi);
    trace = simulation::SimulateFocPi(scenario, c.pi, c.motor);
  } else {
    const config::ControllerArtifact a = config::LoadArtifact(artifact_path);
    config::CheckCompatible(a, c, artifact_path, common.ConfigName());
    if (label.empty()) label = a.robust ? "lpv-robust" : "lpv-nominal";
    const auto k = config::MakeController(a, c);
    try {
      trace = simulation::SimulateLpv(scenario, *k, c.motor);
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError("artifact '" + artifact_path + "' and scenario '" +
                                scenario_name + "': " + e.what());
    }
    artifact_info = {{"path", artifact_path},
                     {"robust", a.robust},
                     {"gamma", a.solution.gamma},
                     {"epsilon", a.solution.epsilon ? json(*a.solution.epsilon) : json(nullptr)}};
  }
  const double seconds = t.Seconds();
  trace.controller = label;

  const fs::path dir = common.OutputDir(c);
  const std::string stem = scenario.name + "_" + label;
  const fs::path trace_path = dir / (stem + ".csv");
  WriteFile(trace_path, simulation::TraceToCsv(trace));
  WriteFile(dir / (stem + "_long.csv"), simulation::TraceToLongCsv(trace));
  json m = {{"format", kMetricsFormat},
            {"schema_version", 1},
            {"scenario", scenario.name},
            {"scenario_hash", trace.scenario_hash},
            {"controller", label},
            {"artifact", artifact_info},
            {"divergent", trace.divergent},
            {"abort_time_s", trace.abort_time},
            {"samples", trace.samples.size()},
            {"sample_interval_s", trace.sample_interval},
            {"wall_time_s", seconds},
            {"metrics", nullptr}};
  if (!trace.divergent) m["metrics"] = simulation::ToJson(simulation::ComputeMetrics(trace));
  WriteFile(dir / (stem + "_metrics.json"), m.dump(1) + "\n");
  if (trace.divergent) {
    err << label << " on '" << scenario.name << "' diverged at t = " << trace.abort_time
        << " s; partial trace written to " << trace_path.string() << "\n";
    return kDivergent;
  }
  const json& mm = m.at("metrics");
  out << label << " on '" << scenario.name << "': ITAE " << Format("%.6g", mm.at("itae_rad").get<double>())
      << " rad, RMS error " << Format("%.4g", mm.at("rms_error_rpm").get<double>())
      << " r/min, peak overshoot " << Format("%.3f", mm.at("peak_overshoot_percent").get<double>())
      << " %\n";
  out << "wrote " << trace_path.string() << "\n";
  return kOk;
}

int Compare(const Common& common, const std::vector<std::string>& paths, std::ostream& out,
            std::ostream& err) {
  std::vector<NamedTrace> traces;
  for (const std::string& p : paths) {
    NamedTrace t;
    t.path = p;
    try {
      t.trace = simulation::TraceFromCsv(ReadFile(p));
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(p + ": " + e.what());
    }
    std::string metrics_path = p;
    if (metrics_path.size() > 4 && metrics_path.substr(metrics_path.size() - 4) == ".csv") {
      metrics_path = metrics_path.substr(0, metrics_path.size() - 4) + "_metrics.json";
      std::ifstream in(metrics_path);
      if (in) {
        try {
          t.metrics_file = json::parse(in);
        } catch (const json::exception&) {
          t.metrics_file = nullptr;
        }
      }
    }
    traces.push_back(std::move(t));
  }
  for (size_t i = 1; i < traces.size(); ++i) {
    if (traces[i].trace.scenario_hash != traces[0].trace.scenario_hash) {
      err << "refusing to compare: " << traces[i].path << " has scenario hash "
          << traces[i].trace.scenario_hash << " but " << traces[0].path << " has "
          << traces[0].trace.scenario_hash << "\n";
      return kScenarioMismatch;
    }
  }
  for (const NamedTrace& t : traces) {
    if (t.trace.divergent) {
      err << t.path << " diverged at t = " << t.trace.abort_time << " s; no metrics to compare\n";
      return kDivergent;
    }
  }
  const json report = CompareTraces(traces);
  const config::ToolkitConfig c = common.Load();
  const fs::path dir = common.OutputDir(c);
  const std::string stem = "comparison_" + report.at("scenario").get<std::string>() + "_" +
                           report.at("scenario_hash").get<std::string>();
  WriteFile(dir / (stem + ".json"), report.dump(1) + "\n");
  const std::string text = RenderComparison(report);
  WriteFile(dir / (stem + ".txt"), text);
  out << text;
  return kOk;
}

// ---------------------------------------------------------------------------

json StepRow(const simulation::StepMetrics& s) {
  return {{"from_rpm", s.from_rpm},
          {"to_rpm", s.to_rpm},
          {"overshoot_percent", s.overshoot_percent},
          {"rise_time_s", s.rise_time},
          {"settling_time_s", s.settling_time},
          {"settled", s.settled},
          {"steady_state_error_rpm", s.steady_state_error_rpm},
          {"itae_rad", s.itae}};
}

std::string Cell(const json& v, const char* fmt) {
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_null()) return "-";
  return Format(fmt, v.get<double>());
}

}  // namespace

json CompareTraces(const std::vector<NamedTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("nothing to compare");
  const std::string hash = traces[0].trace.scenario_hash;
  std::vector<simulation::Metrics> metrics;
  for (const NamedTrace& t : traces) {
    if (t.trace.scenario_hash != hash) {
      throw std::invalid_argument("scenario hash mismatch between " + traces[0].path + " and " + t.path);
    }
    metrics.push_back(simulation::ComputeMetrics(t.trace));
  }
  const simulation::Metrics& ref = metrics[0];
  json report = {{"format", kComparisonFormat},
                 {"schema_version", 1},
                 {"scenario", traces[0].trace.scenario.name},
                 {"scenario_hash", hash},
                 {"reference", traces[0].trace.controller},
                 {"controllers", json::array()}};
  for (size_t i = 0; i < traces.size(); ++i) {
    const simulation::Metrics& m = metrics[i];
    json entry = {{"label", traces[i].trace.controller},
                  {"path", traces[i].path},
                  {"metrics", simulation::ToJson(m)},
                  {"gamma", nullptr}};
    const json& mf = traces[i].metrics_file;
    if (mf.is_object() && mf.contains("artifact") && mf.at("artifact").is_object()) {
      entry["gamma"] = mf.at("artifact").at("gamma");
    }
    // Deltas and checks against the reference trace.
    json deltas = {{"itae_rad", m.itae - ref.itae},
                   {"rms_error_rpm", m.rms_error_rpm - ref.rms_error_rpm},
                   {"peak_overshoot_percent", m.peak_overshoot_percent - ref.peak_overshoot_percent},
                   {"steps", json::array()},
                   {"disturbances", json::array()}};
    json checks = {{"steady_state_below_1rpm", true},
                   {"overshoot_not_above_reference", true},
                   {"settling_not_slower_than_reference", true},
                   {"itae_below_reference", m.itae < ref.itae},
                   {"peak_overshoot_below_reference",
                    m.peak_overshoot_percent < ref.peak_overshoot_percent}};
    for (size_t k = 0; k < m.steps.size(); ++k) {
      const simulation::StepMetrics& s = m.steps[k];
      const simulation::StepMetrics& r = ref.steps[k];
      deltas["steps"].push_back({{"overshoot_percent", s.overshoot_percent - r.overshoot_percent},
                                 {"rise_time_s", s.rise_time - r.rise_time},
                                 {"settling_time_s", s.settled && r.settled
                                                         ? json(s.settling_time - r.settling_time)
                                                         : json(nullptr)},
                                 {"itae_rad", s.itae - r.itae}});
      if (!(s.steady_state_error_rpm < 1.0)) checks["steady_state_below_1rpm"] = false;
      if (s.overshoot_percent > r.overshoot_percent) checks["overshoot_not_above_reference"] = false;
      const bool slower = !s.settled || (r.settled && s.settling_time > r.settling_time);
      if (slower) checks["settling_not_slower_than_reference"] = false;
    }
    bool peak_lower = true, itae_lower = true;
    for (size_t k = 0; k < m.disturbances.size(); ++k) {
      const simulation::DisturbanceMetrics& d = m.disturbances[k];
      const simulation::DisturbanceMetrics& r = ref.disturbances[k];
      deltas["disturbances"].push_back(
          {{"peak_deviation_rpm", d.peak_deviation_rpm - r.peak_deviation_rpm},
           {"itae_rad", d.itae - r.itae}});
      peak_lower = peak_lower && d.peak_deviation_rpm < r.peak_deviation_rpm;
      itae_lower = itae_lower && d.itae < r.itae;
    }
    if (!m.disturbances.empty()) {
      checks["disturbance_peak_below_reference"] = peak_lower;
      checks["disturbance_itae_below_reference"] = itae_lower;
    }
    entry["steps"] = json::array();
    for (const simulation::StepMetrics& s : m.steps) entry["steps"].push_back(StepRow(s));
    entry["delta_to_reference"] = deltas;
    if (i > 0) entry["checks_against_reference"] = checks;
    else entry["checks_against_reference"] = {{"steady_state_below_1rpm", checks["steady_state_below_1rpm"]}};
    report["controllers"].push_back(entry);
  }
  return report;
}

std::string RenderComparison(const json& report) {
  std::ostringstream s;
  s << "comparison on scenario '" << report.at("scenario").get<std::string>() << "' (hash "
    << report.at("scenario_hash").get<std::string>() << "), reference "
    << report.at("reference").get<std::string>() << "\n\n";
  auto row = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), i == 0 ? "%-22s" : "%14s", cells[i].c_str());
      s << buf;
    }
    s << "\n";
  };
  row({"controller", "gamma", "ITAE [rad]", "RMS [r/min]", "overshoot [%]", "dITAE"});
  for (const json& c : report.at("controllers")) {
    const json& m = c.at("metrics");
    row({c.at("label").get<std::string>(), Cell(c.at("gamma"), "%.4g"),
         Cell(m.at("itae_rad"), "%.6g"), Cell(m.at("rms_error_rpm"), "%.4g"),
         Cell(m.at("peak_overshoot_percent"), "%.3f"),
         Cell(c.at("delta_to_reference").at("itae_rad"), "%+.3g")});
  }
  const json& first = report.at("controllers")[0];
  for (size_t k = 0; k < first.at("steps").size(); ++k) {
    const json& st = first.at("steps")[k];
    s << "\nstep " << k + 1 << ": " << Format("%g", st.at("from_rpm").get<double>()) << " -> "
      << Format("%g", st.at("to_rpm").get<double>()) << " r/min\n";
    row({"controller", "overshoot [%]", "rise [s]", "settling [s]", "sse [r/min]", "ITAE [rad]"});
    for (const json& c : report.at("controllers")) {
      const json& x = c.at("steps")[k];
      row({c.at("label").get<std::string>(), Cell(x.at("overshoot_percent"), "%.3f"),
           Cell(x.at("rise_time_s"), "%.4g"),
           x.at("settled").get<bool>() ? Cell(x.at("settling_time_s"), "%.4g") : "unsettled",
           Cell(x.at("steady_state_error_rpm"), "%.3g"), Cell(x.at("itae_rad"), "%.4g")});
    }
  }
  const json& dist = first.at("metrics").at("disturbances");
  for (size_t k = 0; k < dist.size(); ++k) {
    s << "\nload change at " << Format("%g", dist[k].at("start_s").get<double>()) << " s\n";
    row({"controller", "peak [r/min]", "ITAE [rad]", "RMS [r/min]"});
    for (const json& c : report.at("controllers")) {
      const json& d = c.at("metrics").at("disturbances")[k];
      row({c.at("label").get<std::string>(), Cell(d.at("peak_deviation_rpm"), "%.4g"),
           Cell(d.at("itae_rad"), "%.4g"), Cell(d.at("rms_error_rpm"), "%.4g")});
    }
  }
  s << "\nchecks against " << report.at("reference").get<std::string>() << ":\n";
  for (const json& c : report.at("controllers")) {
    for (const auto& [name, v] : c.at("checks_against_reference").items()) {
      s << "  " << c.at("label").get<std::string>() << " " << name << ": "
        << (v.get<bool>() ? "yes" : "no") << "\n";
    }
  }
  return s.str();
}

int Run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LPV speed control of a surface PMSM: synthesis, simulation and comparison"};
  app.name(argv.empty() ? "pmsm_lpv" : argv[0]);
  app.require_subcommand(1);

  Common common;
  bool robust = false;
  CLI::App* synth = app.add_subcommand("synthesize", "Synthesize and verify an LPV controller");
  AddCommon(synth, &common);
  synth->add_flag("--robust", robust, "Robust design for the configured uncertainty");

  std::string artifact, scenario, label;
  bool baseline_pi = false;
  CLI::App* sim = app.add_subcommand("simulate", "Simulate a scenario in closed loop");
  AddCommon(sim, &common);
  CLI::Option* artifact_opt = sim->add_option("-a,--artifact", artifact, "Controller artifact");
  CLI::Option* pi_opt = sim->add_flag("--baseline-pi", baseline_pi, "Use the FOC cascade PI baseline");
  artifact_opt->excludes(pi_opt);
  sim->add_option("-s,--scenario", scenario, "Scenario name from the config")->required();
  sim->add_option("-l,--label", label, "Controller label used in file names");

  std::vector<std::string> traces;
  CLI::App* cmp = app.add_subcommand("compare", "Compare traces of one scenario");
  AddCommon(cmp, &common);
  cmp->add_option("traces", traces, "Trace CSV files")->required()->expected(2, -1);

  std::string verify_artifact;
  std::vector<int> verify_counts;
  CLI::App* ver = app.add_subcommand("verify", "Verify an artifact on a refined grid");
  AddCommon(ver, &common);
  ver->add_option("-a,--artifact", verify_artifact, "Controller artifact")->required();
  ver->add_option("--counts", verify_counts, "Grid counts, e.g. --counts 9 9 5");

  Common print_common;
  CLI::App* print = app.add_subcommand(
      "print-config", "Print the effective configuration (defaults when no file is given)");
  print->add_option("-c,--config", print_common.config_path, "Configuration file (JSON)");

  std::vector<std::string> reversed;
  for (size_t i = argv.size(); i-- > 1;) reversed.push_back(argv[i]);
  try {
    app.parse(reversed);
    if (*sim && artifact.empty() && !baseline_pi) {
      throw CLI::RequiredError("--artifact or --baseline-pi");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*synth) return Synthesize(common, robust, out, err);
    if (*sim) return Simulate(common, artifact, baseline_pi, scenario, label, out, err);
    if (*cmp) return Compare(common, traces, out, err);
    if (*ver) return Verify(common, verify_artifact, verify_counts, out, err);
    if (*print) {
      out << config::ToJson(print_common.Load()).dump(2) << "\n";
      return kOk;
    }
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kUsageError;
  } catch (const config::ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const synthesis::InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const synthesis::SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUsageError;
}

}  // namespace cli
}  // namespace pmsm_lpv
