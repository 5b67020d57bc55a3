#include "pmsm_lpv/controller_runtime.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pmsm_lpv {
namespace controller {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using lpv::GeneralizedPlant;
using lpv::SchedulingPoint;
using synthesis::DecisionValues;

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

ControllerMatrices Combine(const std::vector<std::pair<double, const ControllerMatrices*>>& terms) {
  ControllerMatrices out = *terms.front().second;
  out.A_K *= terms.front().first;
  out.B_K *= terms.front().first;
  out.C_K *= terms.front().first;
  out.D_K *= terms.front().first;
  for (size_t i = 1; i < terms.size(); ++i) {
    const double w = terms[i].first;
    const ControllerMatrices& k = *terms[i].second;
    out.A_K += w * k.A_K;
    out.B_K += w * k.B_K;
    out.C_K += w * k.C_K;
    out.D_K += w * k.D_K;
  }
  return out;
}

}  // namespace

std::string ToString(FactorizationMode mode) {
  return mode == FactorizationMode::kDefault ? "default" : "balanced";
}

FactorizationMode FactorizationModeFromString(const std::string& name) {
  if (name == "default") return FactorizationMode::kDefault;
  if (name == "balanced") return FactorizationMode::kBalanced;
  throw std::invalid_argument("unknown factorization mode '" + name + "'");
}

Factorization Factorize(const MatrixXd& x, const MatrixXd& y, FactorizationMode mode,
                        double max_condition) {
  if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
    throw std::invalid_argument("X and Y must be square matrices of equal size");
  }
  const int n = static_cast<int>(x.rows());
  const MatrixXd r = MatrixXd::Identity(n, n) - x * y;
  Eigen::JacobiSVD<MatrixXd> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  const double condition =
      s(n - 1) > 0.0 ? s(0) / s(n - 1) : std::numeric_limits<double>::infinity();
  if (!(condition <= max_condition)) {
    std::ostringstream msg;
    msg << "I - XY is nearly singular (condition number " << condition
        << "); increase the LMI margin or refine the synthesis grid";
    throw ReconstructionError(msg.str());
  }
  Factorization f;
  f.condition = condition;
  if (mode == FactorizationMode::kDefault) {
    f.N = r;
    f.M = MatrixXd::Identity(n, n);
  } else {
    const VectorXd root = s.cwiseSqrt();
    f.N = svd.matrixU() * root.asDiagonal();
    f.M = svd.matrixV() * root.asDiagonal();
  }
  return f;
}

ControllerMatrices Reconstruct(const GeneralizedPlant& g, const DecisionValues& v,
                               FactorizationMode mode) {
  g.CheckDimensions();
  const Factorization f = Factorize(v.X, v.Y, mode);
  const auto n_lu = f.N.partialPivLu();
  const auto m_lu = f.M.partialPivLu();
  // Right multiplication by M⁻ᵀ: Z M⁻ᵀ = (M⁻¹ Zᵀ)ᵀ.
  auto times_m_inv_t = [&m_lu](const MatrixXd& z) -> MatrixXd {
    return m_lu.solve(z.transpose()).transpose();
  };
  ControllerMatrices k;
  k.D_K = v.D_hat;
  k.C_K = times_m_inv_t(v.C_hat - k.D_K * g.C2 * v.Y);
  k.B_K = n_lu.solve(v.B_hat - v.X * g.B2 * k.D_K);
  const MatrixXd inner = v.X * g.A * v.Y + v.X * g.B2 * k.D_K * g.C2 * v.Y +
                         f.N * k.B_K * g.C2 * v.Y +
                         v.X * g.B2 * k.C_K * f.M.transpose() - v.A_hat;
  k.A_K = -times_m_inv_t(n_lu.solve(inner));
  return k;
}

ControllerMatrices Reconstruct(const synthesis::SynthesisSolution& solution,
                               const PlantFactory& plant, const SchedulingPoint& rho,
                               FactorizationMode mode) {
  const synthesis::Scaling& scaling = solution.scaling;
  const GeneralizedPlant g = synthesis::ScalePlant(plant(rho), scaling);
  const DecisionValues v = synthesis::ScaleDecisionValues(solution.At(rho), scaling);
  ControllerMatrices k = Reconstruct(g, v, mode);
  k.A_K *= scaling.time_scale;
  k.B_K *= scaling.time_scale;
  return k;
}

DecisionValues ForwardChangeOfVariables(const GeneralizedPlant& g,
                                        const ControllerMatrices& k,
                                        const MatrixXd& x, const MatrixXd& y,
                                        const Factorization& f) {
  DecisionValues v;
  v.X = x;
  v.Y = y;
  v.D_hat = k.D_K;
  v.C_hat = k.C_K * f.M.transpose() + k.D_K * g.C2 * y;
  v.B_hat = f.N * k.B_K + x * g.B2 * k.D_K;
  v.A_hat = f.N * k.A_K * f.M.transpose() + f.N * k.B_K * g.C2 * y +
            x * g.B2 * k.C_K * f.M.transpose() + x * (g.A + g.B2 * k.D_K * g.C2) * y;
  return v;
}

ClosedLoopRealization ClosedLoop(const GeneralizedPlant& g, const ControllerMatrices& k) {
  g.CheckDimensions();
  const int n = g.n();
  const int nk = static_cast<int>(k.A_K.rows());
  if (k.A_K.cols() != nk || k.B_K.rows() != nk || k.B_K.cols() != g.ny() ||
      k.C_K.rows() != g.nu() || k.C_K.cols() != nk || k.D_K.rows() != g.nu() ||
      k.D_K.cols() != g.ny()) {
    throw std::invalid_argument("controller dimensions do not match the plant");
  }
  ClosedLoopRealization cl;
  cl.A.resize(n + nk, n + nk);
  cl.A << g.A + g.B2 * k.D_K * g.C2, g.B2 * k.C_K,
          k.B_K * g.C2, k.A_K;
  cl.B.resize(n + nk, g.nw());
  cl.B << g.B1 + g.B2 * k.D_K * g.D21,
          k.B_K * g.D21;
  cl.C.resize(g.nz(), n + nk);
  cl.C << g.C1 + g.D12 * k.D_K * g.C2, g.D12 * k.C_K;
  cl.D = g.D11 + g.D12 * k.D_K * g.D21;
  return cl;
}

double GainAt(const ClosedLoopRealization& cl, double omega) {
  const int n = static_cast<int>(cl.A.rows());
  if (n == 0) {
    return cl.D.size() == 0 ? 0.0 : Eigen::JacobiSVD<MatrixXd>(cl.D).singularValues()(0);
  }
  MatrixXcd s = -cl.A.cast<std::complex<double>>();
  s.diagonal().array() += std::complex<double>(0.0, omega);
  const MatrixXcd g = cl.C.cast<std::complex<double>>() *
                          s.partialPivLu().solve(cl.B.cast<std::complex<double>>()) +
                      cl.D.cast<std::complex<double>>();
  return Eigen::JacobiSVD<MatrixXcd>(g).singularValues()(0);
}

double FrozenHinfNorm(const ClosedLoopRealization& cl, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const int n = static_cast<int>(cl.A.rows());
  const int m = static_cast<int>(cl.B.cols());
  const int p = static_cast<int>(cl.C.rows());
  if (cl.A.cols() != n || cl.B.rows() != n || cl.C.cols() != n || cl.D.rows() != p ||
      cl.D.cols() != m) {
    throw std::invalid_argument("closed-loop realization has inconsistent dimensions");
  }
  if (m == 0 || p == 0) return 0.0;
  double sigma_d = 0.0;
  if (cl.D.size() > 0) sigma_d = Eigen::JacobiSVD<MatrixXd>(cl.D).singularValues()(0);
  if (n == 0) return sigma_d;

  Eigen::EigenSolver<MatrixXd> eig(cl.A, false);
  const Eigen::VectorXcd poles = eig.eigenvalues();
  int worst = 0;
  for (int i = 1; i < n; ++i)
    if (poles(i).real() > poles(worst).real()) worst = i;
  if (poles(worst).real() >= 0.0) {
    std::ostringstream msg;
    msg << "closed loop is not Hurwitz: eigenvalue " << poles(worst).real()
        << (poles(worst).imag() >= 0 ? " + " : " - ") << std::abs(poles(worst).imag())
        << "j";
    throw UnstableError(msg.str(), poles(worst));
  }

  // Initial lower bound from the gain at zero, at the pole magnitudes and at
  // infinity.
  double lower = sigma_d;
  double peak_omega = 0.0;
  auto probe = [&](double w) {
    const double g = GainAt(cl, w);
    if (g > lower) lower = g, peak_omega = w;
    return g;
  };
  probe(0.0);
  for (int i = 0; i < n; ++i) {
    probe(std::abs(poles(i)));
    probe(std::abs(poles(i).imag()));
  }
  if (lower == 0.0) return 0.0;

  // Golden-section search for a local maximum around the best frequency so
  // far. Guards against imaginary-axis eigenvalues the test below misses.
  auto refine = [&]() {
    if (peak_omega <= 0.0) return;
    double a = std::log(peak_omega) - 0.1, b = std::log(peak_omega) + 0.1;
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - ratio * (b - a), d = a + ratio * (b - a);
    double fc = probe(std::exp(c)), fd = probe(std::exp(d));
    for (int it = 0; it < 60; ++it) {
      if (fc >= fd) {
        b = d, d = c, fd = fc;
        c = b - ratio * (b - a);
        fc = probe(std::exp(c));
      } else {
        a = c, c = d, fc = fd;
        d = a + ratio * (b - a);
        fd = probe(std::exp(d));
      }
    }
  };

  const MatrixXd id_p = MatrixXd::Identity(p, p);
  const MatrixXd id_m = MatrixXd::Identity(m, m);
  for (int iteration = 0; iteration < 200; ++iteration) {
    const double gamma = (1.0 + tol) * lower;
    const MatrixXd r = gamma * gamma * id_m - cl.D.transpose() * cl.D;
    const auto r_llt = r.llt();
    const MatrixXd a_h = cl.A + cl.B * r_llt.solve(cl.D.transpose() * cl.C);
    MatrixXd h(2 * n, 2 * n);
    h << a_h, cl.B * r_llt.solve(cl.B.transpose()),
         -cl.C.transpose() * (id_p + cl.D * r_llt.solve(cl.D.transpose())) * cl.C,
         -a_h.transpose();
    Eigen::EigenSolver<MatrixXd> heig(h, false);
    std::vector<double> omegas;
    for (int i = 0; i < 2 * n; ++i) {
      const std::complex<double> l = heig.eigenvalues()(i);
      if (l.imag() < 0.0) continue;
      if (std::abs(l.real()) <= 1e-5 * std::abs(l) + 1e-12 * h.norm()) {
        omegas.push_back(l.imag());
      }
    }
    std::sort(omegas.begin(), omegas.end());
    for (double w : omegas) probe(w);
    for (size_t i = 0; i + 1 < omegas.size(); ++i) probe(0.5 * (omegas[i] + omegas[i + 1]));
    if (lower <= gamma) {
      refine();
      if (lower <= gamma) return 0.5 * (lower + gamma);
    }
  }
  return lower;
}

// ---------------------------------------------------------------------------

ControllerRealization::ControllerRealization(synthesis::SynthesisSolution solution,
                                             PlantFactory plant, FactorizationMode mode)
    : solution_(std::move(solution)), plant_(std::move(plant)), mode_(mode) {
  if (!plant_) throw std::invalid_argument("controller needs a plant factory");
  state_ = VectorXd::Zero(solution_.X.rows());
}

ControllerMatrices ControllerRealization::Exact(const SchedulingPoint& rho) const {
  return Reconstruct(solution_, plant_, rho, mode_);
}

ControllerMatrices ControllerRealization::MatricesAt(const SchedulingPoint& rho) const {
  return cache_.empty() ? Exact(rho) : Interpolated(rho);
}

VectorXd ControllerRealization::Output(const VectorXd& x_k, const VectorXd& y,
                                       const SchedulingPoint& rho) const {
  const ControllerMatrices k = MatricesAt(rho);
  return k.C_K * x_k + k.D_K * y;
}

VectorXd ControllerRealization::Derivative(const VectorXd& x_k, const VectorXd& y,
                                           const SchedulingPoint& rho) const {
  const ControllerMatrices k = MatricesAt(rho);
  return k.A_K * x_k + k.B_K * y;
}

VectorXd ControllerRealization::Step(const VectorXd& y, const SchedulingPoint& rho,
                                     double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step length must be positive");
  const ControllerMatrices k = MatricesAt(rho);
  const VectorXd u = k.C_K * state_ + k.D_K * y;
  const VectorXd drive = k.B_K * y;
  auto f = [&](const VectorXd& x) -> VectorXd { return k.A_K * x + drive; };
  const VectorXd k1 = f(state_);
  const VectorXd k2 = f(state_ + 0.5 * dt * k1);
  const VectorXd k3 = f(state_ + 0.5 * dt * k2);
  const VectorXd k4 = f(state_ + dt * k3);
  state_ += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return u;
}

void ControllerRealization::set_state(const VectorXd& x_k) {
  if (x_k.size() != state_.size()) {
    throw std::invalid_argument("controller state has the wrong dimension");
  }
  state_ = x_k;
}

void ControllerRealization::EnableInterpolation(
    int angles, int temperatures, const std::function<double(double)>& radius) {
  const lpv::ParameterBox& box = solution_.box;
  const bool frozen = box.IsDegenerate(2);
  if (angles < 3 || temperatures < 1 || (!frozen && temperatures < 2)) {
    throw std::invalid_argument("interpolation grid is too coarse");
  }
  if (!radius) throw std::invalid_argument("interpolation needs the circle radius");
  const int nt = frozen ? 1 : temperatures;
  std::vector<ControllerMatrices> cache;
  cache.reserve(static_cast<size_t>(angles) * nt);
  for (int j = 0; j < nt; ++j) {
    const double t =
        nt == 1 ? box.lower[2] : box.lower[2] + (box.upper[2] - box.lower[2]) * j / (nt - 1);
    const double r = radius(t);
    for (int i = 0; i < angles; ++i) {
      const double a = kTwoPi * i / angles;
      cache.push_back(Exact({r * std::sin(a), r * std::cos(a), t}));
    }
  }
  cache_ = std::move(cache);
  cache_angles_ = angles;
  cache_temperatures_ = nt;
  cache_t_min_ = box.lower[2];
  cache_t_max_ = box.upper[2];
}

void ControllerRealization::DisableInterpolation() {
  cache_.clear();
  cache_angles_ = cache_temperatures_ = 0;
}

ControllerMatrices ControllerRealization::Interpolated(const SchedulingPoint& rho) const {
  double a = std::atan2(rho.rho1, rho.rho2);
  if (a < 0.0) a += kTwoPi;
  const double u = a / kTwoPi * cache_angles_;
  const int i0 = std::min(static_cast<int>(std::floor(u)), cache_angles_ - 1);
  const int i1 = (i0 + 1) % cache_angles_;
  const double fa = u - i0;
  int j0 = 0, j1 = 0;
  double ft = 0.0;
  if (cache_temperatures_ > 1) {
    const double t = std::clamp(rho.rho3, cache_t_min_, cache_t_max_);
    const double v = (t - cache_t_min_) / (cache_t_max_ - cache_t_min_) * (cache_temperatures_ - 1);
    j0 = std::min(static_cast<int>(std::floor(v)), cache_temperatures_ - 2);
    j1 = j0 + 1;
    ft = v - j0;
  }
  auto at = [this](int i, int j) { return &cache_[static_cast<size_t>(j) * cache_angles_ + i]; };
  return Combine({{(1 - fa) * (1 - ft), at(i0, j0)},
                  {fa * (1 - ft), at(i1, j0)},
                  {(1 - fa) * ft, at(i0, j1)},
                  {fa * ft, at(i1, j1)}});
}

}  // namespace controller
}  // namespace pmsm_lpv
