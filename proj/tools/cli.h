#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmsm_lpv/simulation.h"

namespace pmsm_lpv {
namespace cli {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kUsageError = 2,
  kConfigError = 3,
  kInfeasible = 4,
  kSolverFailure = 5,
  kDivergent = 6,
  kVerificationFailed = 7,
  kScenarioMismatch = 8,
};

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirVariable = "PMSM_LPV_OUTPUT_DIR";

/// Runs one command line. argv[0] is the program name.
int Run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

struct NamedTrace {
  std::string path;
  simulation::SimTrace trace;
  /// Contents of the metrics file written next to the trace, when present.
  nlohmann::json metrics_file;
};

/// Side-by-side metrics of traces that share one scenario, with deltas and
/// checks against the first trace. Throws std::invalid_argument when the
/// scenario hashes differ or a trace diverged.
nlohmann::json CompareTraces(const std::vector<NamedTrace>& traces);
std::string RenderComparison(const nlohmann::json& report);

}  // namespace cli
}  // namespace pmsm_lpv
