#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmsm_lpv/lmi_synthesis.h"
#include "pmsm_lpv/lpv_model.h"

namespace pmsm_lpv {
namespace controller {

using PlantFactory =
    std::function<lpv::GeneralizedPlant(const lpv::SchedulingPoint&)>;

/// Raised when I − XY is too close to singular for a reliable controller.
class ReconstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by FrozenHinfNorm for a closed loop with an eigenvalue in the
/// closed right half plane.
class UnstableError : public std::runtime_error {
 public:
  UnstableError(const std::string& what, std::complex<double> eigenvalue)
      : std::runtime_error(what), eigenvalue_(eigenvalue) {}
  std::complex<double> eigenvalue() const { return eigenvalue_; }

 private:
  std::complex<double> eigenvalue_;
};

enum class FactorizationMode {
  kDefault,   ///< N = I − XY, M = I.
  kBalanced,  ///< I − XY = UΣVᵀ split as N = UΣ^½, M = VΣ^½.
};

std::string ToString(FactorizationMode mode);
FactorizationMode FactorizationModeFromString(const std::string& name);

inline constexpr double kMaxFactorizationCondition = 1e12;

struct Factorization {
  Eigen::MatrixXd M, N;
  double condition{0.0};  // 2-norm condition number of I − XY
};

/// Solves N Mᵀ = I − XY. Throws ReconstructionError when the condition
/// number of I − XY exceeds `max_condition`.
Factorization Factorize(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        FactorizationMode mode = FactorizationMode::kDefault,
                        double max_condition = kMaxFactorizationCondition);

/// ẋ_K = A_K x_K + B_K y, u = C_K x_K + D_K y.
struct ControllerMatrices {
  Eigen::MatrixXd A_K, B_K, C_K, D_K;
};

/// Controller matrices from decision values and plant data at one scheduling
/// point. Both must be expressed in the same coordinates.
ControllerMatrices Reconstruct(const lpv::GeneralizedPlant& plant,
                               const synthesis::DecisionValues& v,
                               FactorizationMode mode = FactorizationMode::kDefault);

/// Reconstruction for a synthesized solution at ρ in physical units. The
/// work is carried out in the solver's scaled coordinates, so the controller
/// state is the scaled one; the input-output map does not depend on this.
ControllerMatrices Reconstruct(const synthesis::SynthesisSolution& solution,
                               const PlantFactory& plant,
                               const lpv::SchedulingPoint& rho,
                               FactorizationMode mode = FactorizationMode::kDefault);

/// The change of variables that Reconstruct inverts.
synthesis::DecisionValues ForwardChangeOfVariables(
    const lpv::GeneralizedPlant& plant, const ControllerMatrices& k,
    const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
    const Factorization& f);

struct ClosedLoopRealization {
  Eigen::MatrixXd A, B, C, D;
};

ClosedLoopRealization ClosedLoop(const lpv::GeneralizedPlant& plant,
                                 const ControllerMatrices& k);

/// Largest singular value of C(jωI − A)⁻¹B + D.
double GainAt(const ClosedLoopRealization& cl, double omega);

/// H∞ norm of the frozen closed loop to relative tolerance `tol`, computed
/// with the Hamiltonian iteration of Bruinsma and Steinbuch. Throws
/// UnstableError when A is not Hurwitz.
double FrozenHinfNorm(const ClosedLoopRealization& cl, double tol = 1e-9);

/// Online evaluation of a gain-scheduled controller. One instance owns one
/// controller state; it must not be stepped from several threads at once.
class ControllerRealization {
 public:
  ControllerRealization(synthesis::SynthesisSolution solution,
                        PlantFactory plant,
                        FactorizationMode mode = FactorizationMode::kDefault);

  int order() const { return static_cast<int>(state_.size()); }
  FactorizationMode mode() const { return mode_; }
  const synthesis::SynthesisSolution& solution() const { return solution_; }

  /// Controller matrices at ρ in physical time units. Uses the
  /// interpolation cache when it is enabled.
  ControllerMatrices MatricesAt(const lpv::SchedulingPoint& rho) const;

  Eigen::VectorXd Output(const Eigen::VectorXd& x_k, const Eigen::VectorXd& y,
                         const lpv::SchedulingPoint& rho) const;
  Eigen::VectorXd Derivative(const Eigen::VectorXd& x_k,
                             const Eigen::VectorXd& y,
                             const lpv::SchedulingPoint& rho) const;

  /// Returns u at the current state, then advances the state by one RK4 step
  /// of length dt with y and ρ held constant.
  Eigen::VectorXd Step(const Eigen::VectorXd& y, const lpv::SchedulingPoint& rho,
                       double dt);

  const Eigen::VectorXd& state() const { return state_; }
  void set_state(const Eigen::VectorXd& x_k);
  void Reset() { state_.setZero(); }

  /// Precomputes the controller on `angles` electrical angles over one turn
  /// times `temperatures` points of the temperature range, with the circle
  /// radius given by `radius(T)`. MatricesAt then interpolates bilinearly in
  /// (angle, temperature) instead of reconstructing.
  void EnableInterpolation(int angles, int temperatures,
                           const std::function<double(double)>& radius);
  void DisableInterpolation();
  bool interpolating() const { return !cache_.empty(); }

 private:
  ControllerMatrices Exact(const lpv::SchedulingPoint& rho) const;
  ControllerMatrices Interpolated(const lpv::SchedulingPoint& rho) const;

  synthesis::SynthesisSolution solution_;
  PlantFactory plant_;
  FactorizationMode mode_;
  Eigen::VectorXd state_;
  int cache_angles_{0};
  int cache_temperatures_{0};
  double cache_t_min_{0.0};
  double cache_t_max_{0.0};
  std::vector<ControllerMatrices> cache_;
};

}  // namespace controller
}  // namespace pmsm_lpv
