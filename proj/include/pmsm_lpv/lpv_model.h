#pragma once

#include <array>

#include <Eigen/Dense>

#include "pmsm_lpv/motor_model.h"

namespace pmsm_lpv {
namespace lpv {

inline constexpr int kNumParams = 3;

/// ρ = (ρ1, ρ2, ρ3) with ρ1 = pλ sin(pθ), ρ2 = pλ cos(pθ), ρ3 = T.
struct SchedulingPoint {
  double rho1{0.0};
  double rho2{0.0};
  double rho3{0.0};

  std::array<double, kNumParams> AsArray() const { return {rho1, rho2, rho3}; }
  static SchedulingPoint FromArray(const std::array<double, kNumParams>& a) {
    return {a[0], a[1], a[2]};
  }
  double operator[](int i) const { return AsArray()[i]; }
  bool operator==(const SchedulingPoint&) const = default;
};

/// Bounds and rate bounds of the scheduling parameters. An axis whose lower
/// and upper bounds coincide is degenerate: the parameter is frozen and its
/// rate bound is ignored.
struct ParameterBox {
  std::array<double, kNumParams> lower{};
  std::array<double, kNumParams> upper{};
  std::array<double, kNumParams> rate{};

  bool IsDegenerate(int i) const { return lower[i] == upper[i]; }
  bool Contains(const SchedulingPoint& rho, double tol = 1e-12) const;
  void Validate() const;
  bool operator==(const ParameterBox&) const = default;
};

/// Weights of the controlled output z = (φe_z, σe_ω, ξe_α, ψe_β, ηu_α, μu_β).
struct PerformanceWeights {
  double phi{1000.0};
  double sigma{10.0};
  double xi{0.1};
  double psi{0.1};
  double eta{0.01};
  double mu{0.01};

  void Validate() const;
  bool operator==(const PerformanceWeights&) const = default;
};

struct ErrorPlantMatrices {
  Eigen::Matrix4d A;
  Eigen::Vector4d B1;
  Eigen::Matrix<double, 4, 2> B2;
  Eigen::Matrix<double, 2, 4> C;
};

/// ẋ = A x + B1 w + B2 u, z = C1 x + D11 w + D12 u, y = C2 x + D21 w.
struct GeneralizedPlant {
  Eigen::MatrixXd A, B1, B2, C1, C2, D11, D12, D21;

  int n() const { return static_cast<int>(A.rows()); }
  int nw() const { return static_cast<int>(B1.cols()); }
  int nu() const { return static_cast<int>(B2.cols()); }
  int nz() const { return static_cast<int>(C1.rows()); }
  int ny() const { return static_cast<int>(C2.rows()); }

  /// Throws std::invalid_argument when the channel shapes disagree.
  void CheckDimensions() const;
};

/// Scheduling point of a physical rotor angle and temperature. Throws
/// DomainError when the temperature lies outside the box.
SchedulingPoint SchedulingFrom(double theta, double temperature,
                               const motor::MotorParams& params,
                               const ParameterBox& box);

/// Same as SchedulingFrom without the box check.
SchedulingPoint SchedulingFromUnchecked(double theta, double temperature,
                                        const motor::MotorParams& params);

/// Largest flux over a temperature interval (λ is affine in T, so one of the
/// endpoints).
double MaxFluxOver(const motor::MotorParams& params, double t_min,
                   double t_max);

/// Box ±pλ_max for ρ1, ρ2 and [T_min, T_max] for ρ3. Rate bounds follow from
/// differentiating ρ1, ρ2 along |ω| ≤ ω_max and |Ṫ| ≤ Ṫ_max.
ParameterBox DefaultBox(const motor::MotorParams& params, double t_min,
                        double t_max, double omega_max, double t_dot_max);

ErrorPlantMatrices ErrorPlant(const SchedulingPoint& rho,
                              const motor::MotorParams& params,
                              motor::LoadChannel channel =
                                  motor::LoadChannel::kPhysical);

GeneralizedPlant MakeGeneralizedPlant(const SchedulingPoint& rho,
                                      const motor::MotorParams& params,
                                      const PerformanceWeights& weights,
                                      motor::LoadChannel channel =
                                          motor::LoadChannel::kPhysical);

}  // namespace lpv
}  // namespace pmsm_lpv
