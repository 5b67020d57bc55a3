#include "pmsm_lpv/lmi_synthesis.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pmsm_lpv {
namespace synthesis {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using lpv::GeneralizedPlant;
using lpv::ParameterBox;
using lpv::SchedulingPoint;

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Brings the electrical and mechanical time constants of the motor error
// model to order one.
constexpr double kMotorTimeScale = 1000.0;

// Constraints are imposed with twice the requested margin so that the
// achieved margin survives the solver's residual.
constexpr double kMarginSafety = 2.0;

MatrixXd Sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double MaxEigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Sym(m), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

double MinEigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Sym(m), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void RequireShape(const MatrixXd& m, int rows, int cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream msg;
    msg << what << " is " << m.rows() << "x" << m.cols() << ", expected "
        << rows << "x" << cols;
    throw std::invalid_argument(msg.str());
  }
}

void CheckDecisionShapes(const GeneralizedPlant& plant,
                         const DecisionValues& v) {
  plant.CheckDimensions();
  const int n = plant.n();
  RequireShape(v.X, n, n, "X");
  RequireShape(v.Y, n, n, "Y");
  RequireShape(v.A_hat, n, n, "A_hat");
  RequireShape(v.B_hat, n, plant.ny(), "B_hat");
  RequireShape(v.C_hat, plant.nu(), n, "C_hat");
  RequireShape(v.D_hat, plant.nu(), plant.ny(), "D_hat");
}

// Fills the strictly upper blocks from the lower ones.
void CompleteSymmetric(MatrixXd* m) {
  *m = m->triangularView<Eigen::Lower>();
  m->triangularView<Eigen::StrictlyUpper>() = m->transpose();
}

std::array<double, kNumParams> BoxCenter(const ParameterBox& box) {
  std::array<double, kNumParams> c{};
  for (int i = 0; i < kNumParams; ++i) c[i] = 0.5 * (box.lower[i] + box.upper[i]);
  return c;
}

std::array<double, kNumParams> BoxHalfWidth(const ParameterBox& box) {
  std::array<double, kNumParams> h{};
  for (int i = 0; i < kNumParams; ++i) h[i] = 0.5 * (box.upper[i] - box.lower[i]);
  return h;
}

std::vector<double> Linspace(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("grid counts must be >= 1");
  if (lo == hi) return {lo};
  if (count == 1) return {0.5 * (lo + hi)};
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) {
    out[k] = k == count - 1 ? hi : lo + (hi - lo) * k / (count - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decision-variable bookkeeping.

enum Kind { kX, kY, kAhat, kBhat, kChat, kDhat, kNumKinds };

class Layout {
 public:
  Layout(int n, int nu, int ny, const std::array<bool, kNumParams>& active,
         bool constant_x, bool constant_y)
      : rows_{n, n, n, n, nu, nu}, cols_{n, n, n, ny, n, ny} {
    for (int kind = 0; kind < kNumKinds; ++kind) {
      for (int k = 0; k <= kNumParams; ++k) {
        MatrixXi& idx = index_[kind][k];
        idx = MatrixXi::Constant(rows_[kind], cols_[kind], -1);
        bool present = k == 0 || active[k - 1];
        if (k > 0 && kind == kX && constant_x) present = false;
        if (k > 0 && kind == kY && constant_y) present = false;
        if (!present) continue;
        for (int i = 0; i < rows_[kind]; ++i) {
          for (int j = Symmetric(kind) ? i : 0; j < cols_[kind]; ++j) {
            idx(i, j) = num_vars_;
            if (Symmetric(kind)) idx(j, i) = num_vars_;
            ++num_vars_;
          }
        }
      }
    }
    gamma_index_ = num_vars_++;
  }

  static bool Symmetric(int kind) { return kind == kX || kind == kY; }
  int rows(int kind) const { return rows_[kind]; }
  int cols(int kind) const { return cols_[kind]; }
  int Index(int kind, int k, int i, int j) const { return index_[kind][k](i, j); }
  int gamma_index() const { return gamma_index_; }
  int num_vars() const { return num_vars_; }

  MatrixXd Extract(const VectorXd& x, int kind, int k) const {
    MatrixXd m = MatrixXd::Zero(rows_[kind], cols_[kind]);
    for (int i = 0; i < rows_[kind]; ++i)
      for (int j = 0; j < cols_[kind]; ++j) {
        const int id = index_[kind][k](i, j);
        if (id >= 0) m(i, j) = x[id];
      }
    return m;
  }

 private:
  using MatrixXi = Eigen::MatrixXi;
  std::array<int, kNumKinds> rows_;
  std::array<int, kNumKinds> cols_;
  std::array<std::array<MatrixXi, kNumParams + 1>, kNumKinds> index_;
  int num_vars_{0};
  int gamma_index_{-1};
};

struct LocalPoint {
  DecisionValues v;
  MatrixXd x_dot, y_dot;
  double gamma{0.0};
};

MatrixXd& Slot(LocalPoint& p, int kind) {
  switch (kind) {
    case kX: return p.v.X;
    case kY: return p.v.Y;
    case kAhat: return p.v.A_hat;
    case kBhat: return p.v.B_hat;
    case kChat: return p.v.C_hat;
    default: return p.v.D_hat;
  }
}

using Assembler = std::function<MatrixXd(const LocalPoint&)>;

// Writes an affine assembly as constant + Σ terms ⪯ 0. `sign` = −1 turns a
// "⪰ margin" condition into this form; `rate` holds the normalized rate
// vector when the assembly depends on Ẋ and Ẏ.
sdp::LmiBlock Linearize(std::string label, const Assembler& assemble,
                        const Layout& layout,
                        const std::array<double, kNumParams + 1>& rho,
                        const std::array<double, kNumParams>* rate,
                        double sign, double margin) {
  LocalPoint base;
  for (int kind = 0; kind < kNumKinds; ++kind) {
    Slot(base, kind) = MatrixXd::Zero(layout.rows(kind), layout.cols(kind));
  }
  base.x_dot = MatrixXd::Zero(layout.rows(kX), layout.rows(kX));
  base.y_dot = base.x_dot;
  const MatrixXd f0 = assemble(base);

  sdp::LmiBlock block;
  block.label = std::move(label);
  block.constant = sign * f0 + margin * MatrixXd::Identity(f0.rows(), f0.cols());

  auto add_term = [&](const LocalPoint& probe,
                      std::vector<std::pair<int, double>> coefficients) {
    if (coefficients.empty()) return;
    MatrixXd f = assemble(probe) - f0;
    if (f.cwiseAbs().maxCoeff() == 0.0) return;
    block.terms.push_back({std::move(coefficients), sign * f});
  };

  for (int kind = 0; kind < kNumKinds; ++kind) {
    for (int i = 0; i < layout.rows(kind); ++i) {
      for (int j = Layout::Symmetric(kind) ? i : 0; j < layout.cols(kind); ++j) {
        std::vector<std::pair<int, double>> coefficients;
        for (int k = 0; k <= kNumParams; ++k) {
          const int id = layout.Index(kind, k, i, j);
          if (id >= 0 && rho[k] != 0.0) coefficients.emplace_back(id, rho[k]);
        }
        LocalPoint probe = base;
        Slot(probe, kind)(i, j) = 1.0;
        if (Layout::Symmetric(kind)) Slot(probe, kind)(j, i) = 1.0;
        add_term(probe, std::move(coefficients));

        if (rate != nullptr && Layout::Symmetric(kind)) {
          std::vector<std::pair<int, double>> rate_coefficients;
          for (int k = 1; k <= kNumParams; ++k) {
            const int id = layout.Index(kind, k, i, j);
            if (id >= 0 && (*rate)[k - 1] != 0.0) {
              rate_coefficients.emplace_back(id, (*rate)[k - 1]);
            }
          }
          LocalPoint rate_probe = base;
          MatrixXd& d = kind == kX ? rate_probe.x_dot : rate_probe.y_dot;
          d(i, j) = 1.0;
          d(j, i) = 1.0;
          add_term(rate_probe, std::move(rate_coefficients));
        }
      }
    }
  }
  LocalPoint probe = base;
  probe.gamma = 1.0;
  add_term(probe, {{layout.gamma_index(), 1.0}});
  return block;
}

std::string PointLabel(const SchedulingPoint& rho) {
  std::ostringstream s;
  s.precision(6);
  s << "rho=(" << rho.rho1 << ", " << rho.rho2 << ", " << rho.rho3 << ")";
  return s.str();
}

struct SolveOutcome {
  bool feasible{false};
  SynthesisSolution solution;
  std::string worst_label;
  double worst_residual{0.0};
  std::string message;
};

AffineMatrixFunction ToRawParameters(
    const std::array<MatrixXd, kNumParams + 1>& normalized,
    const std::array<double, kNumParams>& center,
    const std::array<double, kNumParams>& half_width) {
  AffineMatrixFunction f;
  f.coefficients[0] = normalized[0];
  for (int i = 0; i < kNumParams; ++i) {
    if (half_width[i] > 0.0) {
      f.coefficients[i + 1] = normalized[i + 1] / half_width[i];
      f.coefficients[0] -= center[i] / half_width[i] * normalized[i + 1];
    } else {
      f.coefficients[i + 1] = MatrixXd::Zero(normalized[0].rows(), normalized[0].cols());
    }
  }
  return f;
}

// Applies a linear map coefficient-wise to the decision functions.
template <typename Map>
void MapSolution(const SynthesisSolution& in, SynthesisSolution* out, Map map) {
  for (int k = 0; k <= kNumParams; ++k) {
    DecisionValues v{in.X.coefficients[k],     in.Y.coefficients[k],
                     in.A_hat.coefficients[k], in.B_hat.coefficients[k],
                     in.C_hat.coefficients[k], in.D_hat.coefficients[k]};
    const DecisionValues m = map(v);
    out->X.coefficients[k] = m.X;
    out->Y.coefficients[k] = m.Y;
    out->A_hat.coefficients[k] = m.A_hat;
    out->B_hat.coefficients[k] = m.B_hat;
    out->C_hat.coefficients[k] = m.C_hat;
    out->D_hat.coefficients[k] = m.D_hat;
  }
}

SolveOutcome SolveOnce(const SynthesisProblem& problem,
                       const std::vector<SchedulingPoint>& grid,
                       const std::array<int, 3>& counts,
                       std::optional<double> epsilon) {
  const ParameterBox& box = problem.box;
  const auto center = BoxCenter(box);
  const auto half = BoxHalfWidth(box);
  std::array<bool, kNumParams> active{};
  for (int i = 0; i < kNumParams; ++i) active[i] = half[i] > 0.0;

  const Scaling& scaling = problem.scaling;
  const double w0 = scaling.time_scale;
  const GeneralizedPlant probe_plant = ScalePlant(problem.plant(grid.front()), scaling);
  const int n = probe_plant.n();
  const Layout layout(n, probe_plant.nu(), probe_plant.ny(), active,
                      problem.constant_x, problem.constant_y);

  std::optional<RobustData> robust;
  if (problem.robust) robust = ScaleRobustData(*problem.robust, scaling);

  // Normalized rate vertices in scaled time.
  std::vector<std::array<double, kNumParams>> rates;
  for (const RateVector& v : RateVertices(box)) {
    std::array<double, kNumParams> r{};
    for (int i = 0; i < kNumParams; ++i) r[i] = active[i] ? v[i] / w0 / half[i] : 0.0;
    rates.push_back(r);
  }

  const double margin = kMarginSafety * problem.lmi_margin;
  const double radius = problem.pole_radius / w0;

  sdp::Problem sdp_problem;
  sdp_problem.num_vars = layout.num_vars();
  sdp_problem.objective = VectorXd::Unit(layout.num_vars(), layout.gamma_index());

  for (size_t p = 0; p < grid.size(); ++p) {
    const SchedulingPoint& rho = grid[p];
    const GeneralizedPlant plant = ScalePlant(problem.plant(rho), scaling);
    std::array<double, kNumParams + 1> rho_n{1.0, 0.0, 0.0, 0.0};
    const auto raw = rho.AsArray();
    for (int i = 0; i < kNumParams; ++i) {
      rho_n[i + 1] = active[i] ? (raw[i] - center[i]) / half[i] : 0.0;
    }
    const std::string where = "point " + std::to_string(p) + " " + PointLabel(rho);

    for (size_t r = 0; r < rates.size(); ++r) {
      Assembler performance;
      if (robust) {
        const double eps = epsilon.value_or(1.0);
        performance = [&plant, &robust, eps](const LocalPoint& lp) {
          return AssembleRobustLmi(plant, lp.v, lp.x_dot, lp.y_dot, lp.gamma,
                                   eps, *robust);
        };
      } else {
        performance = [&plant](const LocalPoint& lp) {
          return AssembleNominalLmi(plant, lp.v, lp.x_dot, lp.y_dot, lp.gamma);
        };
      }
      sdp_problem.blocks.push_back(Linearize(
          "performance " + where + " vertex " + std::to_string(r), performance,
          layout, rho_n, &rates[r], 1.0, margin));
    }
    sdp_problem.blocks.push_back(Linearize(
        "coupling " + where,
        [](const LocalPoint& lp) { return AssembleCouplingLmi(lp.v.X, lp.v.Y); },
        layout, rho_n, nullptr, -1.0, margin));
    if (problem.decision_bound > 0.0) {
      const double bound = problem.decision_bound;
      sdp_problem.blocks.push_back(Linearize(
          "bound_x " + where,
          [bound](const LocalPoint& lp) {
            return MatrixXd(lp.v.X - bound * MatrixXd::Identity(lp.v.X.rows(), lp.v.X.cols()));
          },
          layout, rho_n, nullptr, 1.0, margin));
      sdp_problem.blocks.push_back(Linearize(
          "bound_y " + where,
          [bound](const LocalPoint& lp) {
            return MatrixXd(lp.v.Y - bound * MatrixXd::Identity(lp.v.Y.rows(), lp.v.Y.cols()));
          },
          layout, rho_n, nullptr, 1.0, margin));
    }
    if (radius > 0.0) {
      sdp_problem.blocks.push_back(Linearize(
          "pole_region " + where,
          [&plant, radius](const LocalPoint& lp) {
            return AssemblePoleRegionLmi(plant, lp.v, radius);
          },
          layout, rho_n, nullptr, 1.0, margin));
    }
  }

  sdp::Result result = sdp::Solve(sdp_problem, problem.solver);
  SolveOutcome outcome;
  outcome.message = result.message;
  if (result.status == sdp::Status::kInfeasible) {
    size_t worst = 0;
    for (size_t b = 1; b < result.block_max_eigenvalue.size(); ++b) {
      if (result.block_max_eigenvalue[b] > result.block_max_eigenvalue[worst]) worst = b;
    }
    outcome.worst_label = sdp_problem.blocks[worst].label;
    outcome.worst_residual = result.block_max_eigenvalue[worst];
    return outcome;
  }
  bool suboptimal = false;
  if (result.status != sdp::Status::kOptimal) {
    // Accept a stalled run whose iterate is feasible to tolerance.
    const bool usable = result.status == sdp::Status::kMaxIterations &&
                        result.primal_infeasibility < 1e-6 &&
                        result.dual_infeasibility < 1e-6 &&
                        result.relative_gap < 1e-5;
    // Otherwise keep an iterate that satisfies every constraint, margin
    // included. This happens when the infimum of γ is not attained.
    const bool feasible =
        result.x.allFinite() &&
        *std::max_element(result.block_max_eigenvalue.begin(),
                          result.block_max_eigenvalue.end()) <= 0.0;
    suboptimal = !usable && feasible;
    if (!usable && !feasible) {
      throw SolverError("semidefinite solver stopped: " + sdp::ToString(result.status) +
                        " (" + result.message + "), gap " +
                        std::to_string(result.relative_gap) + ", primal residual " +
                        std::to_string(result.primal_infeasibility) +
                        ", dual residual " + std::to_string(result.dual_infeasibility));
    }
  }

  const double gamma_optimal = result.x[layout.gamma_index()];
  const sdp::Status primary_status = result.status;
  double centering_margin = 0.0;
  if (problem.gamma_backoff > 0.0) {
    const int t_index = layout.num_vars();
    sdp_problem.num_vars = layout.num_vars() + 1;
    for (auto& block : sdp_problem.blocks) {
      block.terms.push_back({{{t_index, 1.0}}, MatrixXd::Identity(block.dim(), block.dim())});
    }
    const double cap = (1.0 + problem.gamma_backoff) * gamma_optimal;
    sdp_problem.blocks.push_back({"gamma_cap", MatrixXd::Constant(1, 1, -cap),
                                  {{{{layout.gamma_index(), 1.0}}, MatrixXd::Ones(1, 1)}}});
    sdp_problem.objective = -VectorXd::Unit(sdp_problem.num_vars, t_index);
    const sdp::Result centered = sdp::Solve(sdp_problem, problem.solver);
    // Only a strictly feasible point is needed here, not the exact optimum.
    const bool usable = centered.status != sdp::Status::kInfeasible &&
                        centered.dual_infeasibility < 1e-8 &&
                        centered.x.allFinite() && centered.x[t_index] > 0.0 &&
                        centered.x[layout.gamma_index()] <= cap * (1.0 + 1e-9);
    if (usable) {
      result = centered;
      result.x.conservativeResize(layout.num_vars());
      centering_margin = centered.x[t_index];
    }
  }

  SynthesisSolution scaled;
  auto collect = [&](int kind) {
    std::array<MatrixXd, kNumParams + 1> c;
    for (int k = 0; k <= kNumParams; ++k) c[k] = layout.Extract(result.x, kind, k);
    return ToRawParameters(c, center, half);
  };
  scaled.X = collect(kX);
  scaled.Y = collect(kY);
  scaled.A_hat = collect(kAhat);
  scaled.B_hat = collect(kBhat);
  scaled.C_hat = collect(kChat);
  scaled.D_hat = collect(kDhat);

  SynthesisSolution& sol = outcome.solution;
  sol = scaled;
  MapSolution(scaled, &sol, [&scaling](const DecisionValues& v) {
    return UnscaleDecisionValues(v, scaling);
  });
  sol.gamma = result.x[layout.gamma_index()];
  if (problem.robust) {
    sol.robust = problem.robust;
    sol.epsilon = epsilon.value_or(1.0);
  }
  sol.scaling = scaling;
  sol.box = box;
  sol.grid_mode = problem.grid_mode;
  sol.counts = counts;
  sol.lmi_margin = problem.lmi_margin;
  sol.pole_radius = problem.pole_radius;
  sol.gamma_optimal = gamma_optimal;
  sol.centering_margin = centering_margin;
  sol.solver_status = suboptimal ? "suboptimal" : sdp::ToString(primary_status);
  sol.solver_iterations = result.iterations;
  sol.primal_infeasibility = result.primal_infeasibility;
  sol.dual_infeasibility = result.dual_infeasibility;
  sol.relative_gap = result.relative_gap;
  outcome.feasible = true;
  return outcome;
}

void ValidateProblem(const SynthesisProblem& problem) {
  if (!problem.plant) throw std::invalid_argument("synthesis problem has no plant");
  problem.box.Validate();
  for (int i = 0; i < kNumParams; ++i) {
    if (!problem.box.IsDegenerate(i) && problem.counts[i] < 2) {
      throw std::invalid_argument("grid counts must be >= 2 on every non-degenerate axis");
    }
  }
  if (problem.grid_mode == GridMode::kCircle && !problem.circle_radius) {
    throw std::invalid_argument("circle grid requires a radius function");
  }
  if (!(problem.lmi_margin >= 0.0)) throw std::invalid_argument("lmi_margin must be >= 0");
  if (!(problem.pole_radius >= 0.0)) throw std::invalid_argument("pole_radius must be >= 0");
  if (!(problem.decision_bound >= 0.0)) {
    throw std::invalid_argument("decision_bound must be >= 0");
  }
  if (!(problem.scaling.time_scale > 0.0)) {
    throw std::invalid_argument("time scale must be positive");
  }
  if (problem.epsilon && !(*problem.epsilon > 0.0)) {
    throw std::invalid_argument("epsilon must be positive");
  }
  const auto& es = problem.epsilon_search;
  if (!(es.lower > 0.0 && es.upper > es.lower && es.iterations >= 1)) {
    throw std::invalid_argument("invalid epsilon search interval");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

AffineMatrixFunction AffineMatrixFunction::Zero(int rows, int cols) {
  AffineMatrixFunction f;
  for (auto& c : f.coefficients) c = MatrixXd::Zero(rows, cols);
  return f;
}

AffineMatrixFunction AffineMatrixFunction::Constant(const MatrixXd& m) {
  AffineMatrixFunction f = Zero(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  f.coefficients[0] = m;
  return f;
}

MatrixXd AffineMatrixFunction::Evaluate(const SchedulingPoint& rho) const {
  MatrixXd out = coefficients[0];
  const auto r = rho.AsArray();
  for (int i = 0; i < kNumParams; ++i) out += r[i] * coefficients[i + 1];
  return out;
}

bool AffineMatrixFunction::IsSymmetric(double tol) const {
  for (const auto& c : coefficients) {
    if (c.rows() != c.cols()) return false;
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

MatrixXd LyapunovRateTerm(const AffineMatrixFunction& f, const RateVector& rate) {
  MatrixXd out = MatrixXd::Zero(f.rows(), f.cols());
  for (int i = 0; i < kNumParams; ++i) {
    RequireShape(f.coefficients[i + 1], f.rows(), f.cols(), "affine coefficient");
    out += rate[i] * f.coefficients[i + 1];
  }
  return out;
}

std::string ToString(GridMode mode) {
  return mode == GridMode::kBox ? "box" : "circle";
}

GridMode GridModeFromString(const std::string& name) {
  if (name == "box") return GridMode::kBox;
  if (name == "circle") return GridMode::kCircle;
  throw std::invalid_argument("unknown grid mode '" + name + "'");
}

std::vector<SchedulingPoint> GridPoints(const ParameterBox& box,
                                        const std::array<int, 3>& counts) {
  std::array<std::vector<double>, kNumParams> axes;
  for (int i = 0; i < kNumParams; ++i) axes[i] = Linspace(box.lower[i], box.upper[i], counts[i]);
  std::vector<SchedulingPoint> out;
  for (double a : axes[0])
    for (double b : axes[1])
      for (double c : axes[2]) out.push_back({a, b, c});
  return out;
}

std::vector<SchedulingPoint> CirclePoints(
    const ParameterBox& box, const std::array<int, 3>& counts,
    const std::function<double(double)>& radius) {
  const int angles = counts[0] * counts[1];
  if (angles < 1) throw std::invalid_argument("grid counts must be >= 1");
  std::vector<SchedulingPoint> out;
  for (int k = 0; k < angles; ++k) {
    const double a = kTwoPi * k / angles;
    for (double t : Linspace(box.lower[2], box.upper[2], counts[2])) {
      const double r = radius(t);
      out.push_back({r * std::sin(a), r * std::cos(a), t});
    }
  }
  return out;
}

std::vector<RateVector> RateVertices(const ParameterBox& box) {
  std::vector<RateVector> out{RateVector{0.0, 0.0, 0.0}};
  for (int i = 0; i < kNumParams; ++i) {
    if (box.IsDegenerate(i) || !(box.rate[i] > 0.0)) continue;
    std::vector<RateVector> next;
    for (const RateVector& v : out) {
      for (double s : {-1.0, 1.0}) {
        RateVector w = v;
        w[i] = s * box.rate[i];
        next.push_back(w);
      }
    }
    out = std::move(next);
  }
  return out;
}

bool RobustData::IsZero() const {
  return H.isZero(0.0) || (E1.isZero(0.0) && E2.isZero(0.0));
}

void RobustData::Validate(int n, int nu) const {
  if (H.rows() != n) throw std::invalid_argument("H must have n rows");
  if (E1.cols() != n) throw std::invalid_argument("E1 must have n columns");
  if (E2.cols() != nu) throw std::invalid_argument("E2 must have nu columns");
  if (E1.rows() != E2.rows()) throw std::invalid_argument("E1 and E2 row counts differ");
  if (H.cols() == 0 || E1.rows() == 0) throw std::invalid_argument("empty uncertainty");
}

MatrixXd AssembleNominalLmi(const GeneralizedPlant& g, const DecisionValues& v,
                            const MatrixXd& x_dot, const MatrixXd& y_dot,
                            double gamma) {
  CheckDecisionShapes(g, v);
  const int n = g.n(), nw = g.nw(), nz = g.nz();
  RequireShape(x_dot, n, n, "X rate term");
  RequireShape(y_dot, n, n, "Y rate term");
  const MatrixXd xa = v.X * g.A + v.B_hat * g.C2;
  const MatrixXd ay = g.A * v.Y + g.B2 * v.C_hat;

  MatrixXd m = MatrixXd::Zero(2 * n + nw + nz, 2 * n + nw + nz);
  m.block(0, 0, n, n) = x_dot + xa + xa.transpose();
  m.block(n, 0, n, n) = v.A_hat.transpose() + g.A + g.B2 * v.D_hat * g.C2;
  m.block(n, n, n, n) = -y_dot + ay + ay.transpose();
  m.block(2 * n, 0, nw, n) = (v.X * g.B1 + v.B_hat * g.D21).transpose();
  m.block(2 * n, n, nw, n) = (g.B1 + g.B2 * v.D_hat * g.D21).transpose();
  m.block(2 * n, 2 * n, nw, nw) = -gamma * MatrixXd::Identity(nw, nw);
  m.block(2 * n + nw, 0, nz, n) = g.C1 + g.D12 * v.D_hat * g.C2;
  m.block(2 * n + nw, n, nz, n) = g.C1 * v.Y + g.D12 * v.C_hat;
  m.block(2 * n + nw, 2 * n, nz, nw) = g.D11 + g.D12 * v.D_hat * g.D21;
  m.block(2 * n + nw, 2 * n + nw, nz, nz) = -gamma * MatrixXd::Identity(nz, nz);
  CompleteSymmetric(&m);
  return m;
}

MatrixXd AssembleRobustLmi(const GeneralizedPlant& g, const DecisionValues& v,
                           const MatrixXd& x_dot, const MatrixXd& y_dot,
                           double gamma, double epsilon, const RobustData& r) {
  r.Validate(g.n(), g.nu());
  const MatrixXd nominal = AssembleNominalLmi(g, v, x_dot, y_dot, gamma);
  const int n = g.n(), nw = g.nw(), nz = g.nz();
  const int ni = static_cast<int>(r.H.cols());
  const int nj = static_cast<int>(r.E1.rows());
  const int base = 2 * n + nw + nz;
  const int size = base + 2 * ni + 2 * nj;

  MatrixXd m = MatrixXd::Zero(size, size);
  m.topLeftCorner(base, base) = nominal;
  const MatrixXd ht = r.H.transpose();
  int row = base;
  // (HᵀX, Hᵀ, 0, 0, −εI)
  m.block(row, 0, ni, n) = ht * v.X;
  m.block(row, n, ni, n) = ht;
  m.block(row, row, ni, ni) = -epsilon * MatrixXd::Identity(ni, ni);
  row += ni;
  // (εE1, εE1Y, 0, 0, 0, −εI)
  m.block(row, 0, nj, n) = epsilon * r.E1;
  m.block(row, n, nj, n) = epsilon * r.E1 * v.Y;
  m.block(row, row, nj, nj) = -epsilon * MatrixXd::Identity(nj, nj);
  row += nj;
  // (0, Hᵀ, 0, 0, 0, 0, −εI)
  m.block(row, n, ni, n) = ht;
  m.block(row, row, ni, ni) = -epsilon * MatrixXd::Identity(ni, ni);
  row += ni;
  // (εE2D̂C2, εE2Ĉ, εE2D̂D21, 0, 0, 0, 0, −εI)
  m.block(row, 0, nj, n) = epsilon * r.E2 * v.D_hat * g.C2;
  m.block(row, n, nj, n) = epsilon * r.E2 * v.C_hat;
  m.block(row, 2 * n, nj, nw) = epsilon * r.E2 * v.D_hat * g.D21;
  m.block(row, row, nj, nj) = -epsilon * MatrixXd::Identity(nj, nj);
  CompleteSymmetric(&m);
  return m;
}

MatrixXd AssembleCouplingLmi(const MatrixXd& x, const MatrixXd& y) {
  const int n = static_cast<int>(x.rows());
  RequireShape(x, n, n, "X");
  RequireShape(y, n, n, "Y");
  MatrixXd m(2 * n, 2 * n);
  m << x, MatrixXd::Identity(n, n), MatrixXd::Identity(n, n), y;
  return m;
}

MatrixXd AssemblePoleRegionLmi(const GeneralizedPlant& g, const DecisionValues& v,
                               double radius) {
  CheckDecisionShapes(g, v);
  const int n = g.n();
  MatrixXd phi(2 * n, 2 * n);
  phi << v.X * g.A + v.B_hat * g.C2, v.A_hat,
         g.A + g.B2 * v.D_hat * g.C2, g.A * v.Y + g.B2 * v.C_hat;
  const MatrixXd p = AssembleCouplingLmi(v.X, v.Y);
  MatrixXd m(4 * n, 4 * n);
  m << -radius * p, phi, phi.transpose(), -radius * p;
  return m;
}

// ---------------------------------------------------------------------------
// Scaling.

VectorXd Scaling::StateScale(int n) const {
  if (state_scale.size() == 0) return VectorXd::Ones(n);
  if (state_scale.size() != n) {
    throw std::invalid_argument("state scaling has the wrong length");
  }
  if (!(state_scale.array() > 0.0).all()) {
    throw std::invalid_argument("state scaling entries must be positive");
  }
  return state_scale;
}

bool Scaling::operator==(const Scaling& other) const {
  return time_scale == other.time_scale &&
         state_scale.size() == other.state_scale.size() &&
         state_scale == other.state_scale;
}

GeneralizedPlant ScalePlant(const GeneralizedPlant& plant, const Scaling& scaling) {
  plant.CheckDimensions();
  const VectorXd t = scaling.StateScale(plant.n());
  const double w0 = scaling.time_scale;
  const auto tm = t.asDiagonal();
  const auto ti = t.cwiseInverse().asDiagonal();
  GeneralizedPlant s = plant;
  s.A = tm * plant.A * ti / w0;
  s.B1 = tm * plant.B1 / w0;
  s.B2 = tm * plant.B2 / w0;
  s.C1 = plant.C1 * ti;
  s.C2 = plant.C2 * ti;
  return s;
}

RobustData ScaleRobustData(const RobustData& robust, const Scaling& scaling) {
  const VectorXd t = scaling.StateScale(static_cast<int>(robust.H.rows()));
  RobustData s;
  s.H = t.asDiagonal() * robust.H / scaling.time_scale;
  s.E1 = robust.E1 * t.cwiseInverse().asDiagonal();
  s.E2 = robust.E2;
  return s;
}

DecisionValues UnscaleDecisionValues(const DecisionValues& v, const Scaling& scaling) {
  const VectorXd t = scaling.StateScale(static_cast<int>(v.X.rows()));
  const double w0 = scaling.time_scale;
  const auto tm = t.asDiagonal();
  const auto ti = t.cwiseInverse().asDiagonal();
  DecisionValues out;
  out.X = Sym(tm * v.X * tm / w0);
  out.Y = Sym(w0 * (ti * v.Y * ti));
  out.A_hat = w0 * (tm * v.A_hat * ti);
  out.B_hat = tm * v.B_hat;
  out.C_hat = w0 * (v.C_hat * ti);
  out.D_hat = v.D_hat;
  return out;
}

DecisionValues ScaleDecisionValues(const DecisionValues& v, const Scaling& scaling) {
  const VectorXd t = scaling.StateScale(static_cast<int>(v.X.rows()));
  const double w0 = scaling.time_scale;
  const auto tm = t.asDiagonal();
  const auto ti = t.cwiseInverse().asDiagonal();
  DecisionValues out;
  out.X = Sym(w0 * (ti * v.X * ti));
  out.Y = Sym(tm * v.Y * tm / w0);
  out.A_hat = ti * v.A_hat * tm / w0;
  out.B_hat = ti * v.B_hat;
  out.C_hat = v.C_hat * tm / w0;
  out.D_hat = v.D_hat;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SchedulingPoint> SynthesisProblem::Grid() const { return Grid(counts); }

std::vector<SchedulingPoint> SynthesisProblem::Grid(const std::array<int, 3>& c) const {
  if (grid_mode == GridMode::kBox) return GridPoints(box, c);
  return CirclePoints(box, c, circle_radius);
}

DecisionValues SynthesisSolution::At(const SchedulingPoint& rho) const {
  return {X.Evaluate(rho),     Y.Evaluate(rho),     A_hat.Evaluate(rho),
          B_hat.Evaluate(rho), C_hat.Evaluate(rho), D_hat.Evaluate(rho)};
}

RobustData CoverDeviations(const std::vector<MatrixXd>& a_devs,
                           const std::vector<MatrixXd>& b2_devs, const Scaling& scaling) {
  if (a_devs.empty() || a_devs.size() != b2_devs.size()) {
    throw std::invalid_argument("deviation samples must be non-empty and paired");
  }
  const int n = static_cast<int>(a_devs.front().rows());
  const int nu = static_cast<int>(b2_devs.front().cols());
  const VectorXd t = scaling.StateScale(n);
  const double w0 = scaling.time_scale;
  std::vector<bool> a_rows(n), a_cols(n), b_rows(n), b_cols(nu);
  double sigma_a = 0.0, sigma_b = 0.0;
  for (size_t k = 0; k < a_devs.size(); ++k) {
    const MatrixXd& a = a_devs[k];
    const MatrixXd& b = b2_devs[k];
    if (a.rows() != n || a.cols() != n || b.rows() != n || b.cols() != nu) {
      throw std::invalid_argument("deviation samples must be n×n and n×nu");
    }
    if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("non-finite deviation");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (a(i, j) != 0.0) a_rows[i] = a_cols[j] = true;
      }
      for (int j = 0; j < nu; ++j) {
        if (b(i, j) != 0.0) b_rows[i] = b_cols[j] = true;
      }
    }
    const MatrixXd as = t.asDiagonal() * a * t.cwiseInverse().asDiagonal() / w0;
    const MatrixXd bs = t.asDiagonal() * b / w0;
    sigma_a = std::max(sigma_a, as.operatorNorm());
    sigma_b = std::max(sigma_b, bs.operatorNorm());
  }
  auto count = [](const std::vector<bool>& v) {
    return static_cast<int>(std::count(v.begin(), v.end(), true));
  };
  const int ra = sigma_a > 0.0 ? count(a_rows) : 0, ca = sigma_a > 0.0 ? count(a_cols) : 0;
  const int rb = sigma_b > 0.0 ? count(b_rows) : 0, cb = sigma_b > 0.0 ? count(b_cols) : 0;
  // Built in scaled coordinates, where H' = √σ · (row selection) and
  // E' = √σ · (column selection) per block, then mapped back.
  RobustData r;
  r.H = MatrixXd::Zero(n, ra + rb);
  r.E1 = MatrixXd::Zero(ca + cb, n);
  r.E2 = MatrixXd::Zero(ca + cb, nu);
  int k = 0;
  for (int i = 0; i < n && ra > 0; ++i) {
    if (a_rows[i]) r.H(i, k++) = std::sqrt(sigma_a) * w0 / t(i);
  }
  for (int i = 0; i < n && rb > 0; ++i) {
    if (b_rows[i]) r.H(i, k++) = std::sqrt(sigma_b) * w0 / t(i);
  }
  k = 0;
  for (int j = 0; j < n && ca > 0; ++j) {
    if (a_cols[j]) r.E1(k++, j) = std::sqrt(sigma_a) * t(j);
  }
  for (int j = 0; j < nu && cb > 0; ++j) {
    if (b_cols[j]) r.E2(k++, j) = std::sqrt(sigma_b);
  }
  return r;
}

std::string ToString(UncertaintyModel model) {
  return model == UncertaintyModel::kInputGain ? "input-gain" : "full";
}

UncertaintyModel UncertaintyModelFromString(const std::string& name) {
  if (name == "input-gain") return UncertaintyModel::kInputGain;
  if (name == "full") return UncertaintyModel::kFull;
  throw std::invalid_argument("unknown uncertainty model '" + name + "'");
}

RobustData MotorUncertainty(const motor::MotorParams& nominal,
                            const motor::MotorParams& perturbed, const ParameterBox& box,
                            const Scaling& scaling, UncertaintyModel model,
                            motor::LoadChannel channel) {
  nominal.Validate();
  perturbed.Validate();
  box.Validate();
  constexpr int kAngles = 72, kTemperatures = 5, kLevels = 4;
  std::vector<MatrixXd> a_devs, b_devs;
  for (int level = 1; level <= kLevels; ++level) {
    const double s = static_cast<double>(level) / kLevels;
    motor::MotorParams p = nominal;
    auto blend = [s](double a, double b) { return a * std::pow(b / a, s); };
    p.stator_inductance = blend(nominal.stator_inductance, perturbed.stator_inductance);
    p.inertia = blend(nominal.inertia, perturbed.inertia);
    p.stator_resistance_ref = blend(nominal.stator_resistance_ref, perturbed.stator_resistance_ref);
    p.friction = blend(nominal.friction, perturbed.friction);
    for (int it = 0; it < kTemperatures; ++it) {
      const double temperature =
          box.lower[2] + (box.upper[2] - box.lower[2]) * it / (kTemperatures - 1);
      for (int ia = 0; ia < kAngles; ++ia) {
        const double angle = kTwoPi * ia / kAngles;
        const double radius = nominal.pole_pairs * motor::FluxAt(nominal, temperature);
        const SchedulingPoint rho{radius * std::sin(angle), radius * std::cos(angle), temperature};
        const lpv::ErrorPlantMatrices a = lpv::ErrorPlant(rho, nominal, channel);
        const lpv::ErrorPlantMatrices b = lpv::ErrorPlant(rho, p, channel);
        a_devs.push_back(model == UncertaintyModel::kFull ? MatrixXd(b.A - a.A)
                                                          : MatrixXd::Zero(4, 4));
        b_devs.push_back(b.B2 - a.B2);
      }
    }
  }
  return CoverDeviations(a_devs, b_devs, scaling);
}

SynthesisProblem MotorSynthesisProblem(const motor::MotorParams& params,
                                       const lpv::PerformanceWeights& weights,
                                       const ParameterBox& box,
                                       motor::LoadChannel channel) {
  params.Validate();
  weights.Validate();
  box.Validate();
  SynthesisProblem problem;
  problem.plant = [params, weights, channel](const SchedulingPoint& rho) {
    return lpv::MakeGeneralizedPlant(rho, params, weights, channel);
  };
  problem.circle_radius = [params](double temperature) {
    return params.pole_pairs * motor::FluxAt(params, temperature);
  };
  problem.box = box;
  problem.scaling.time_scale = kMotorTimeScale;
  problem.scaling.state_scale = Eigen::Vector4d(kMotorTimeScale, 1.0, 4.0, 4.0);
  problem.decision_bound = 1e4;
  problem.pole_radius = 5e4;
  problem.gamma_backoff = 0.02;
  return problem;
}

SynthesisSolution Synthesize(const SynthesisProblem& problem) {
  ValidateProblem(problem);
  const std::vector<SchedulingPoint> grid = problem.Grid();
  if (grid.empty()) throw std::invalid_argument("empty synthesis grid");
  {
    const GeneralizedPlant g = problem.plant(grid.front());
    g.CheckDimensions();
    if (problem.robust) problem.robust->Validate(g.n(), g.nu());
  }

  auto fail = [](const SolveOutcome& o) {
    throw InfeasibleError("synthesis LMIs are infeasible; most violated: " +
                              o.worst_label + " (normalized residual " +
                              std::to_string(o.worst_residual) + ")",
                          o.worst_label, o.worst_residual);
  };

  std::optional<double> epsilon = problem.epsilon;
  if (problem.robust && !epsilon) {
    if (problem.robust->IsZero()) {
      epsilon = 1.0;
    } else {
      const std::array<int, 3> search_counts =
          problem.epsilon_search.counts.value_or(problem.counts);
      const std::vector<SchedulingPoint> search_grid = problem.Grid(search_counts);
      auto gamma_at = [&](double log_eps) {
        try {
          const SolveOutcome o = SolveOnce(problem, search_grid, search_counts,
                                           std::exp(log_eps));
          return o.feasible ? o.solution.gamma : std::numeric_limits<double>::infinity();
        } catch (const SolverError&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      // Coarse scan to bracket the minimum, then golden-section refinement.
      const double lo = std::log(problem.epsilon_search.lower);
      const double hi = std::log(problem.epsilon_search.upper);
      const int scan = 5;
      std::vector<double> xs(scan), fs(scan);
      for (int k = 0; k < scan; ++k) {
        xs[k] = lo + (hi - lo) * k / (scan - 1);
        fs[k] = gamma_at(xs[k]);
      }
      const int best = static_cast<int>(std::min_element(fs.begin(), fs.end()) - fs.begin());
      if (!std::isfinite(fs[best])) {
        const SolveOutcome o = SolveOnce(problem, grid, problem.counts, std::exp(xs[scan / 2]));
        if (!o.feasible) fail(o);
        return o.solution;
      }
      double a = xs[std::max(0, best - 1)];
      double b = xs[std::min(scan - 1, best + 1)];
      const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = b - ratio * (b - a), d = a + ratio * (b - a);
      double fc = gamma_at(c), fd = gamma_at(d);
      double best_x = xs[best], best_f = fs[best];
      for (int it = 0; it < problem.epsilon_search.iterations; ++it) {
        if (fc < best_f) best_f = fc, best_x = c;
        if (fd < best_f) best_f = fd, best_x = d;
        if (fc <= fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - ratio * (b - a);
          fc = gamma_at(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + ratio * (b - a);
          fd = gamma_at(d);
        }
      }
      if (fc < best_f) best_f = fc, best_x = c;
      if (fd < best_f) best_f = fd, best_x = d;
      epsilon = std::exp(best_x);
    }
  }

  const SolveOutcome outcome = SolveOnce(problem, grid, problem.counts, epsilon);
  if (!outcome.feasible) fail(outcome);
  return outcome.solution;
}

VerificationReport VerifySolution(
    const SynthesisSolution& solution,
    const std::function<GeneralizedPlant(const SchedulingPoint&)>& plant,
    const std::vector<SchedulingPoint>& points, const std::vector<RateVector>& rates,
    std::optional<double> threshold) {
  const Scaling& scaling = solution.scaling;
  const double w0 = scaling.time_scale;
  SynthesisSolution scaled = solution;
  MapSolution(solution, &scaled, [&scaling](const DecisionValues& v) {
    return ScaleDecisionValues(v, scaling);
  });
  std::optional<RobustData> robust;
  if (solution.robust) robust = ScaleRobustData(*solution.robust, scaling);
  const double radius = solution.pole_radius / w0;

  VerificationReport report;
  report.threshold = threshold.value_or(0.5 * solution.lmi_margin);
  report.worst_performance = std::numeric_limits<double>::infinity();
  report.worst_coupling = std::numeric_limits<double>::infinity();
  report.worst_pole_region = std::numeric_limits<double>::infinity();
  for (const SchedulingPoint& rho : points) {
    const GeneralizedPlant g = ScalePlant(plant(rho), scaling);
    const DecisionValues v = scaled.At(rho);
    PointMargin pm;
    pm.rho = rho;
    pm.performance = std::numeric_limits<double>::infinity();
    for (const RateVector& rate : rates) {
      RateVector rs;
      for (int i = 0; i < kNumParams; ++i) rs[i] = rate[i] / w0;
      const MatrixXd xd = LyapunovRateTerm(scaled.X, rs);
      const MatrixXd yd = LyapunovRateTerm(scaled.Y, rs);
      const MatrixXd m =
          robust ? AssembleRobustLmi(g, v, xd, yd, solution.gamma,
                                     solution.epsilon.value_or(1.0), *robust)
                 : AssembleNominalLmi(g, v, xd, yd, solution.gamma);
      pm.performance = std::min(pm.performance, -MaxEigenvalue(m));
    }
    pm.coupling = MinEigenvalue(AssembleCouplingLmi(v.X, v.Y));
    pm.pole_region = radius > 0.0
                         ? -MaxEigenvalue(AssemblePoleRegionLmi(g, v, radius))
                         : std::numeric_limits<double>::infinity();
    pm.passed = pm.performance >= report.threshold &&
                pm.coupling >= report.threshold &&
                pm.pole_region >= report.threshold;
    report.worst_performance = std::min(report.worst_performance, pm.performance);
    report.worst_coupling = std::min(report.worst_coupling, pm.coupling);
    report.worst_pole_region = std::min(report.worst_pole_region, pm.pole_region);
    if (!pm.passed) ++report.num_failed;
    report.points.push_back(pm);
  }
  report.passed = report.num_failed == 0;
  return report;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

using nlohmann::json;

constexpr const char* kSolutionFormat = "pmsm_lpv.synthesis_solution";
constexpr int kSolutionSchemaVersion = 1;

json MatrixToJson(const MatrixXd& m) {
  json data = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd MatrixFromJson(const json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<int>(data.size()) != rows * cols) {
    throw std::invalid_argument("matrix data size does not match its shape");
  }
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) m(i, k) = data.at(i * cols + k).get<double>();
  return m;
}

json AffineToJson(const AffineMatrixFunction& f) {
  json coefficients = json::array();
  for (const auto& c : f.coefficients) coefficients.push_back(MatrixToJson(c));
  return {{"rows", f.rows()}, {"cols", f.cols()}, {"coefficients", coefficients}};
}

AffineMatrixFunction AffineFromJson(const json& j) {
  AffineMatrixFunction f;
  const auto& c = j.at("coefficients");
  if (c.size() != kNumParams + 1) {
    throw std::invalid_argument("affine function needs one coefficient per parameter plus a constant");
  }
  for (int k = 0; k <= kNumParams; ++k) {
    f.coefficients[k] = MatrixFromJson(c.at(k));
    RequireShape(f.coefficients[k], j.at("rows").get<int>(), j.at("cols").get<int>(),
                 "affine coefficient");
  }
  return f;
}

json ArrayToJson(const std::array<double, kNumParams>& a) {
  return json::array({a[0], a[1], a[2]});
}

std::array<double, kNumParams> ArrayFromJson(const json& j) {
  if (j.size() != kNumParams) throw std::invalid_argument("expected three values");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

std::string SerializeSolution(const SynthesisSolution& s) {
  json j;
  j["format"] = kSolutionFormat;
  j["schema_version"] = kSolutionSchemaVersion;
  j["gamma"] = s.gamma;
  j["epsilon"] = s.epsilon ? json(*s.epsilon) : json(nullptr);
  j["decision"] = {{"X", AffineToJson(s.X)},         {"Y", AffineToJson(s.Y)},
                   {"A_hat", AffineToJson(s.A_hat)}, {"B_hat", AffineToJson(s.B_hat)},
                   {"C_hat", AffineToJson(s.C_hat)}, {"D_hat", AffineToJson(s.D_hat)}};
  if (s.robust) {
    j["robust"] = {{"H", MatrixToJson(s.robust->H)},
                   {"E1", MatrixToJson(s.robust->E1)},
                   {"E2", MatrixToJson(s.robust->E2)}};
  } else {
    j["robust"] = nullptr;
  }
  json state_scale = json::array();
  for (int i = 0; i < s.scaling.state_scale.size(); ++i) state_scale.push_back(s.scaling.state_scale[i]);
  j["scaling"] = {{"time_scale", s.scaling.time_scale}, {"state_scale", state_scale}};
  j["box"] = {{"lower", ArrayToJson(s.box.lower)},
              {"upper", ArrayToJson(s.box.upper)},
              {"rate", ArrayToJson(s.box.rate)}};
  j["grid"] = {{"mode", ToString(s.grid_mode)},
               {"counts", json::array({s.counts[0], s.counts[1], s.counts[2]})}};
  j["lmi_margin"] = s.lmi_margin;
  j["pole_radius"] = s.pole_radius;
  j["gamma_optimal"] = s.gamma_optimal;
  j["centering_margin"] = s.centering_margin;
  j["solver"] = {{"status", s.solver_status},
                 {"iterations", s.solver_iterations},
                 {"primal_infeasibility", s.primal_infeasibility},
                 {"dual_infeasibility", s.dual_infeasibility},
                 {"relative_gap", s.relative_gap}};
  return j.dump(2) + "\n";
}

SynthesisSolution DeserializeSolution(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("controller artifact is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kSolutionFormat) {
      throw std::invalid_argument("not a synthesis solution artifact");
    }
    if (j.at("schema_version").get<int>() != kSolutionSchemaVersion) {
      throw std::invalid_argument("unsupported solution schema version " +
                                  j.at("schema_version").dump());
    }
    SynthesisSolution s;
    s.gamma = j.at("gamma").get<double>();
    if (!j.at("epsilon").is_null()) s.epsilon = j.at("epsilon").get<double>();
    const auto& d = j.at("decision");
    s.X = AffineFromJson(d.at("X"));
    s.Y = AffineFromJson(d.at("Y"));
    s.A_hat = AffineFromJson(d.at("A_hat"));
    s.B_hat = AffineFromJson(d.at("B_hat"));
    s.C_hat = AffineFromJson(d.at("C_hat"));
    s.D_hat = AffineFromJson(d.at("D_hat"));
    if (!j.at("robust").is_null()) {
      const auto& r = j.at("robust");
      s.robust = RobustData{MatrixFromJson(r.at("H")), MatrixFromJson(r.at("E1")),
                            MatrixFromJson(r.at("E2"))};
    }
    s.scaling.time_scale = j.at("scaling").at("time_scale").get<double>();
    const auto& ss = j.at("scaling").at("state_scale");
    s.scaling.state_scale.resize(static_cast<int>(ss.size()));
    for (size_t i = 0; i < ss.size(); ++i) s.scaling.state_scale[i] = ss.at(i).get<double>();
    s.box.lower = ArrayFromJson(j.at("box").at("lower"));
    s.box.upper = ArrayFromJson(j.at("box").at("upper"));
    s.box.rate = ArrayFromJson(j.at("box").at("rate"));
    s.grid_mode = GridModeFromString(j.at("grid").at("mode").get<std::string>());
    const auto& counts = j.at("grid").at("counts");
    for (int i = 0; i < 3; ++i) s.counts[i] = counts.at(i).get<int>();
    s.lmi_margin = j.at("lmi_margin").get<double>();
    s.pole_radius = j.at("pole_radius").get<double>();
    s.gamma_optimal = j.at("gamma_optimal").get<double>();
    s.centering_margin = j.at("centering_margin").get<double>();
    const auto& sv = j.at("solver");
    s.solver_status = sv.at("status").get<std::string>();
    s.solver_iterations = sv.at("iterations").get<int>();
    s.primal_infeasibility = sv.at("primal_infeasibility").get<double>();
    s.dual_infeasibility = sv.at("dual_infeasibility").get<double>();
    s.relative_gap = sv.at("relative_gap").get<double>();
    if (!s.X.IsSymmetric() || !s.Y.IsSymmetric()) {
      throw std::invalid_argument("X and Y must be symmetric");
    }
    return s;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed controller artifact: ") + e.what());
  }
}

}  // namespace synthesis
}  // namespace pmsm_lpv
