#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace pmsm_lpv {
namespace sdp {

/// A term (Σ_k w_k x_k) · matrix of an LMI block. `matrix` must be symmetric.
struct Term {
  std::vector<std::pair<int, double>> coefficients;
  Eigen::MatrixXd matrix;
};

/// The constraint constant + Σ terms ⪯ 0.
struct LmiBlock {
  std::string label;
  Eigen::MatrixXd constant;
  std::vector<Term> terms;

  int dim() const { return static_cast<int>(constant.rows()); }
  Eigen::MatrixXd Evaluate(const Eigen::VectorXd& x) const;
};

/// minimize objectiveᵀ x subject to every block ⪯ 0.
struct Problem {
  int num_vars{0};
  Eigen::VectorXd objective;
  std::vector<LmiBlock> blocks;
};

struct Options {
  int max_iterations{120};
  double gap_tolerance{1e-9};
  double feasibility_tolerance{1e-9};
  /// A primal ray with ‖A(Z)‖ below this fraction of −⟨C, Z⟩ certifies that
  /// the LMIs have no solution.
  double infeasibility_tolerance{1e-9};
  /// When progress stalls, the best iterate is still reported optimal if its
  /// gap and residuals are below this tolerance.
  double acceptable_tolerance{1e-6};
  double step_fraction{0.98};
  bool verbose{false};
};

enum class Status { kOptimal, kInfeasible, kMaxIterations, kNumericalFailure };

std::string ToString(Status status);

struct Result {
  Status status{Status::kNumericalFailure};
  Eigen::VectorXd x;
  double objective{0.0};
  double primal_objective{0.0};  // normalized units
  double dual_objective{0.0};    // normalized units
  double relative_gap{0.0};
  double primal_infeasibility{0.0};
  double dual_infeasibility{0.0};
  int iterations{0};
  /// Largest eigenvalue of each block at `x`, divided by the block scale.
  std::vector<double> block_max_eigenvalue;
  /// Share of the final primal (multiplier) iterate carried by each block.
  /// Large shares point at the constraints that obstruct feasibility.
  std::vector<double> block_multiplier_share;
  std::string message;
};

/// Largest absolute entry over a block's constant and term matrices.
double BlockScale(const LmiBlock& block);

/// Solves the problem with a primal-dual interior-point method
/// (HKM direction, Mehrotra predictor-corrector). Variables that enter no
/// block and carry no cost are fixed at zero. Throws std::invalid_argument
/// for malformed problems.
Result Solve(const Problem& problem, const Options& options = {});

}  // namespace sdp
}  // namespace pmsm_lpv
