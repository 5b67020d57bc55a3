#pragma once

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmsm_lpv/lpv_model.h"
#include "pmsm_lpv/sdp_solver.h"

namespace pmsm_lpv {
namespace synthesis {

using lpv::kNumParams;
using RateVector = std::array<double, kNumParams>;

/// M(ρ) = M0 + Σ ρ_i M_i.
struct AffineMatrixFunction {
  std::array<Eigen::MatrixXd, kNumParams + 1> coefficients;

  static AffineMatrixFunction Zero(int rows, int cols);
  static AffineMatrixFunction Constant(const Eigen::MatrixXd& m);

  int rows() const { return static_cast<int>(coefficients[0].rows()); }
  int cols() const { return static_cast<int>(coefficients[0].cols()); }
  Eigen::MatrixXd Evaluate(const lpv::SchedulingPoint& rho) const;
  bool IsSymmetric(double tol = 0.0) const;
  bool operator==(const AffineMatrixFunction&) const = default;
};

/// Σ ρ̇_i F_i. The constant coefficient does not contribute.
Eigen::MatrixXd LyapunovRateTerm(const AffineMatrixFunction& f,
                                 const RateVector& rate);

enum class GridMode {
  kBox,     ///< Cartesian product over the parameter box.
  kCircle,  ///< Electrical angle × temperature on the flux circle.
};

std::string ToString(GridMode mode);
GridMode GridModeFromString(const std::string& name);

/// Uniform samples per axis including both endpoints; degenerate axes
/// contribute a single point.
std::vector<lpv::SchedulingPoint> GridPoints(const lpv::ParameterBox& box,
                                             const std::array<int, 3>& counts);

/// counts[0]·counts[1] electrical angles spread uniformly over one turn, times
/// counts[2] temperatures. `radius(T)` gives the circle radius p·λ(T).
std::vector<lpv::SchedulingPoint> CirclePoints(
    const lpv::ParameterBox& box, const std::array<int, 3>& counts,
    const std::function<double(double)>& radius);

/// The sign combinations ±ν_i of the non-zero rate bounds.
std::vector<RateVector> RateVertices(const lpv::ParameterBox& box);

/// Values of the decision matrices at one scheduling point.
struct DecisionValues {
  Eigen::MatrixXd X, Y, A_hat, B_hat, C_hat, D_hat;
};

/// Norm-bounded uncertainty ΔA = H Δ E1, ΔB2 = H Δ E2 with ‖Δ‖ ≤ 1.
struct RobustData {
  Eigen::MatrixXd H, E1, E2;

  bool IsZero() const;
  /// Throws std::invalid_argument on shape mismatch against n states and nu
  /// control inputs.
  void Validate(int n, int nu) const;
  bool operator==(const RobustData&) const = default;
};

/// Symmetric matrix whose negative definiteness is the performance condition
/// for the nominal plant; size 2n + nw + nz.
Eigen::MatrixXd AssembleNominalLmi(const lpv::GeneralizedPlant& plant,
                                   const DecisionValues& v,
                                   const Eigen::MatrixXd& x_dot,
                                   const Eigen::MatrixXd& y_dot, double gamma);

/// The nominal matrix bordered by the uncertainty rows. Its size grows by
/// twice the column count of H plus twice the row count of E1.
Eigen::MatrixXd AssembleRobustLmi(const lpv::GeneralizedPlant& plant,
                                  const DecisionValues& v,
                                  const Eigen::MatrixXd& x_dot,
                                  const Eigen::MatrixXd& y_dot, double gamma,
                                  double epsilon, const RobustData& robust);

/// [X I; I Y].
Eigen::MatrixXd AssembleCouplingLmi(const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& y);

/// Negative definiteness places the closed-loop poles inside the disk of the
/// given radius centered at the origin.
Eigen::MatrixXd AssemblePoleRegionLmi(const lpv::GeneralizedPlant& plant,
                                      const DecisionValues& v, double radius);

/// Coordinate change applied before solving: states x' = T x with
/// T = diag(state_scale) and time t' = time_scale · t.
struct Scaling {
  double time_scale{1.0};
  Eigen::VectorXd state_scale;  // empty means identity

  Eigen::VectorXd StateScale(int n) const;
  bool operator==(const Scaling& other) const;
};

lpv::GeneralizedPlant ScalePlant(const lpv::GeneralizedPlant& plant,
                                 const Scaling& scaling);
RobustData ScaleRobustData(const RobustData& robust, const Scaling& scaling);
/// Maps decision values found for the scaled plant back to physical units.
DecisionValues UnscaleDecisionValues(const DecisionValues& v,
                                     const Scaling& scaling);
/// Inverse of UnscaleDecisionValues.
DecisionValues ScaleDecisionValues(const DecisionValues& v,
                                   const Scaling& scaling);

/// Norm-bounded cover of sampled deviations ΔA_k (n×n) and ΔB2_k (n×nu).
/// H Δ [E1 E2] reproduces every sample with Δ = diag(Δ_A, Δ_B), ‖Δ‖ ≤ 1,
/// where Δ_A acts on the rows and columns where some ΔA_k is nonzero and Δ_B
/// likewise for ΔB2. The two blocks are balanced in the coordinates of
/// `scaling`.
RobustData CoverDeviations(const std::vector<Eigen::MatrixXd>& a_devs,
                           const std::vector<Eigen::MatrixXd>& b2_devs,
                           const Scaling& scaling);

enum class UncertaintyModel {
  kInputGain,  ///< Only ΔB2, the mismatch of 1/L_s in the input matrix.
  kFull,       ///< ΔA and ΔB2.
};

std::string ToString(UncertaintyModel model);
UncertaintyModel UncertaintyModelFromString(const std::string& name);

/// Cover of the motor error model when the true motor lies anywhere between
/// `nominal` and `perturbed` (geometric interpolation of each parameter),
/// sampled over electrical angles and the temperature range of `box`.
RobustData MotorUncertainty(const motor::MotorParams& nominal,
                            const motor::MotorParams& perturbed,
                            const lpv::ParameterBox& box,
                            const Scaling& scaling,
                            UncertaintyModel model = UncertaintyModel::kInputGain,
                            motor::LoadChannel channel =
                                motor::LoadChannel::kPhysical);

struct EpsilonSearch {
  double lower{1e-3};
  double upper{1e3};
  int iterations{10};
  /// When set, the search runs on this coarser grid and only the final
  /// solve uses the full grid.
  std::optional<std::array<int, 3>> counts;
};

struct SynthesisProblem {
  std::function<lpv::GeneralizedPlant(const lpv::SchedulingPoint&)> plant;
  lpv::ParameterBox box;
  GridMode grid_mode{GridMode::kCircle};
  std::array<int, 3> counts{5, 5, 3};
  /// Circle radius as a function of ρ3, used by GridMode::kCircle.
  std::function<double(double)> circle_radius;
  std::optional<RobustData> robust;
  /// Fixed multiplier for the robust condition; searched when unset.
  std::optional<double> epsilon;
  EpsilonSearch epsilon_search;
  double lmi_margin{1e-7};
  /// Closed-loop pole radius bound in rad/s; zero disables it.
  double pole_radius{0.0};
  /// When positive, X(ρ) ⪯ bound·I and Y(ρ) ⪯ bound·I at every grid point,
  /// in scaled coordinates. Keeps I − XY well conditioned.
  double decision_bound{0.0};
  bool constant_x{false};
  bool constant_y{false};
  /// When positive, a second solve caps γ at (1 + gamma_backoff) times the
  /// optimum and maximizes a common margin t on every constraint. This moves
  /// the solution away from the boundary, which helps between grid points.
  double gamma_backoff{0.0};
  Scaling scaling;
  sdp::Options solver;

  /// Training grid implied by grid_mode and counts.
  std::vector<lpv::SchedulingPoint> Grid() const;
  std::vector<lpv::SchedulingPoint> Grid(const std::array<int, 3>& counts) const;
};

struct SynthesisSolution {
  AffineMatrixFunction X, Y, A_hat, B_hat, C_hat, D_hat;
  double gamma{0.0};
  std::optional<double> epsilon;  // in scaled coordinates
  std::optional<RobustData> robust;
  Scaling scaling;
  lpv::ParameterBox box;
  GridMode grid_mode{GridMode::kCircle};
  std::array<int, 3> counts{0, 0, 0};
  double lmi_margin{0.0};
  double pole_radius{0.0};
  double gamma_optimal{0.0};  // before any backoff
  double centering_margin{0.0};
  std::string solver_status;
  int solver_iterations{0};
  double primal_infeasibility{0.0};
  double dual_infeasibility{0.0};
  double relative_gap{0.0};

  DecisionValues At(const lpv::SchedulingPoint& rho) const;
  bool operator==(const SynthesisSolution&) const = default;
};

/// Plant factory and circle radius for the SPMSM error model, with scaling,
/// decision bound, pole radius and γ backoff tuned for it.
SynthesisProblem MotorSynthesisProblem(
    const motor::MotorParams& params, const lpv::PerformanceWeights& weights,
    const lpv::ParameterBox& box,
    motor::LoadChannel channel = motor::LoadChannel::kPhysical);

/// Raised when the LMIs admit no solution. `worst_label` names the most
/// violated constraint at the last iterate.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::string worst_label,
                  double worst_residual)
      : std::runtime_error(what),
        worst_label_(std::move(worst_label)),
        worst_residual_(worst_residual) {}
  const std::string& worst_label() const { return worst_label_; }
  double worst_residual() const { return worst_residual_; }

 private:
  std::string worst_label_;
  double worst_residual_;
};

/// Raised when the interior-point method stalls.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimizes γ subject to the gridded conditions. Throws InfeasibleError or
/// SolverError.
SynthesisSolution Synthesize(const SynthesisProblem& problem);

struct PointMargin {
  lpv::SchedulingPoint rho;
  double performance{0.0};  // −λmax over rate vertices
  double coupling{0.0};     // λmin of [X I; I Y]
  double pole_region{0.0};  // −λmax, infinity when not imposed
  bool passed{false};
};

struct VerificationReport {
  std::vector<PointMargin> points;
  double worst_performance{0.0};
  double worst_coupling{0.0};
  double worst_pole_region{0.0};
  double threshold{0.0};
  int num_failed{0};
  bool passed{false};
};

/// Margins of the synthesis conditions at arbitrary points, in the scaled
/// coordinates used by the solver. Passing requires every margin to reach
/// `threshold` (the solution's lmi_margin / 2 by default).
VerificationReport VerifySolution(
    const SynthesisSolution& solution,
    const std::function<lpv::GeneralizedPlant(const lpv::SchedulingPoint&)>&
        plant,
    const std::vector<lpv::SchedulingPoint>& points,
    const std::vector<RateVector>& rates,
    std::optional<double> threshold = std::nullopt);

/// Lossless text form of a solution.
std::string SerializeSolution(const SynthesisSolution& solution);
SynthesisSolution DeserializeSolution(const std::string& text);

}  // namespace synthesis
}  // namespace pmsm_lpv
