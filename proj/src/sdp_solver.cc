#include "pmsm_lpv/sdp_solver.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pmsm_lpv {
namespace sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Coefficients = std::vector<std::pair<int, double>>;

// Internal standard form, per block k:
//   dual:   S_k = C_k - Σ_l z_l G_l ⪰ 0,   z_l = Σ_j w_lj y_j,  max bᵀy
//   primal: X_k ⪰ 0,  Σ_k A_k(X_k) = b,                      min Σ ⟨C_k, X_k⟩
struct Entry {
  int row;
  int col;
  double value;
};

struct WorkBlock {
  int n{0};
  double scale{1.0};
  MatrixXd C;
  std::vector<MatrixXd> G;
  std::vector<std::vector<Entry>> nonzeros;  // empty when G is treated as dense
  std::vector<Coefficients> coeff;
  MatrixXd X, S, S_inv;
};

MatrixXd Sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double TraceProduct(const MatrixXd& sym_a, const MatrixXd& b) {
  // tr(A B) for symmetric A.
  return sym_a.cwiseProduct(b.transpose()).sum();
}

// tr(G_l Z) using the sparsity pattern of G_l when available.
double TermTrace(const WorkBlock& blk, size_t l, const MatrixXd& z) {
  if (blk.nonzeros[l].empty()) return TraceProduct(blk.G[l], z);
  double v = 0.0;
  for (const Entry& e : blk.nonzeros[l]) v += e.value * z(e.col, e.row);
  return v;
}

// out += A_k(Z)
void AddAdjoint(const WorkBlock& blk, const MatrixXd& z, VectorXd* out) {
  for (size_t l = 0; l < blk.G.size(); ++l) {
    const double v = TermTrace(blk, l, z);
    if (v == 0.0) continue;
    for (const auto& [j, w] : blk.coeff[l]) (*out)[j] += w * v;
  }
}

// Σ_l z_l G_l for z = W y.
MatrixXd Operator(const WorkBlock& blk, const VectorXd& y) {
  MatrixXd out = MatrixXd::Zero(blk.n, blk.n);
  for (size_t l = 0; l < blk.G.size(); ++l) {
    double z = 0.0;
    for (const auto& [j, w] : blk.coeff[l]) z += w * y[j];
    if (z == 0.0) continue;
    if (blk.nonzeros[l].empty()) {
      out.noalias() += z * blk.G[l];
    } else {
      for (const Entry& e : blk.nonzeros[l]) out(e.row, e.col) += z * e.value;
    }
  }
  return out;
}

// Largest α with M + α dM ⪰ 0 (infinity when dM keeps M definite).
double MaxStep(const MatrixXd& m, const MatrixXd& dm) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return 0.0;
  const MatrixXd a1 = llt.matrixL().solve(dm);
  const MatrixXd t = llt.matrixL().solve(a1.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Sym(t), Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct Direction {
  VectorXd dy;
  std::vector<MatrixXd> dX, dS;
};

}  // namespace

std::string ToString(Status status) {
  switch (status) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kMaxIterations: return "max_iterations";
    case Status::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

MatrixXd LmiBlock::Evaluate(const VectorXd& x) const {
  MatrixXd out = constant;
  for (const auto& term : terms) {
    double z = 0.0;
    for (const auto& [j, w] : term.coefficients) z += w * x[j];
    if (z != 0.0) out.noalias() += z * term.matrix;
  }
  return out;
}

double BlockScale(const LmiBlock& block) {
  double s = block.constant.cwiseAbs().maxCoeff();
  for (const auto& t : block.terms) {
    double wmax = 0.0;
    for (const auto& [j, w] : t.coefficients) wmax = std::max(wmax, std::abs(w));
    s = std::max(s, wmax * t.matrix.cwiseAbs().maxCoeff());
  }
  return s > 0.0 ? s : 1.0;
}

Result Solve(const Problem& problem, const Options& options) {
  const int m = problem.num_vars;
  if (m <= 0) throw std::invalid_argument("sdp::Solve: no decision variables");
  if (problem.objective.size() != m) {
    throw std::invalid_argument("sdp::Solve: objective size mismatch");
  }
  if (problem.blocks.empty()) {
    throw std::invalid_argument("sdp::Solve: no constraint blocks");
  }

  // Variables that enter no block are fixed at zero and removed.
  std::vector<int> remap(m, -1);
  for (const auto& src : problem.blocks) {
    for (const auto& t : src.terms) {
      if (t.matrix.squaredNorm() == 0.0) continue;
      for (const auto& [j, w] : t.coefficients) {
        if (j < 0 || j >= m) {
          throw std::invalid_argument("sdp::Solve: variable index out of range");
        }
        if (w != 0.0) remap[j] = 0;
      }
    }
  }
  int used = 0;
  for (int j = 0; j < m; ++j) {
    if (remap[j] == 0) {
      remap[j] = used++;
    } else if (problem.objective[j] != 0.0) {
      std::ostringstream msg;
      msg << "sdp::Solve: variable " << j
          << " does not enter any block but has a nonzero cost";
      throw std::invalid_argument(msg.str());
    }
  }
  if (used < m) {
    if (used == 0) throw std::invalid_argument("sdp::Solve: no variable enters a block");
    Problem reduced;
    reduced.num_vars = used;
    reduced.objective = VectorXd::Zero(used);
    for (int j = 0; j < m; ++j)
      if (remap[j] >= 0) reduced.objective[remap[j]] = problem.objective[j];
    reduced.blocks = problem.blocks;
    for (auto& blk : reduced.blocks) {
      for (auto& t : blk.terms) {
        std::vector<std::pair<int, double>> c;
        for (const auto& [j, w] : t.coefficients)
          if (remap[j] >= 0) c.emplace_back(remap[j], w);
        t.coefficients = std::move(c);
      }
    }
    Result r = Solve(reduced, options);
    VectorXd x = VectorXd::Zero(m);
    for (int j = 0; j < m; ++j)
      if (remap[j] >= 0) x[j] = r.x[remap[j]];
    r.x = x;
    return r;
  }

  // Block equilibration.
  std::vector<WorkBlock> blocks(problem.blocks.size());
  VectorXd col_norm2 = VectorXd::Zero(m);
  for (size_t k = 0; k < blocks.size(); ++k) {
    const LmiBlock& src = problem.blocks[k];
    WorkBlock& blk = blocks[k];
    blk.n = src.dim();
    if (src.constant.cols() != blk.n || blk.n == 0) {
      throw std::invalid_argument("sdp::Solve: block '" + src.label +
                                  "' constant must be square and non-empty");
    }
    double s = 0.0;
    for (const auto& t : src.terms) {
      if (t.matrix.rows() != blk.n || t.matrix.cols() != blk.n) {
        throw std::invalid_argument("sdp::Solve: term shape mismatch in '" +
                                    src.label + "'");
      }
      s = std::max(s, t.matrix.norm());
    }
    if (s == 0.0) s = std::max(1.0, src.constant.norm());
    blk.scale = s;
    blk.C = -Sym(src.constant) / s;
    for (const auto& t : src.terms) {
      if (t.coefficients.empty() || t.matrix.squaredNorm() == 0.0) continue;
      for (const auto& [j, w] : t.coefficients) {
        if (j < 0 || j >= m) {
          throw std::invalid_argument("sdp::Solve: variable index out of range");
        }
      }
      blk.G.push_back(Sym(t.matrix) / s);
      blk.coeff.push_back(t.coefficients);
      std::vector<Entry> nz;
      const MatrixXd& g = blk.G.back();
      for (int c = 0; c < blk.n; ++c)
        for (int r = 0; r < blk.n; ++r)
          if (g(r, c) != 0.0) nz.push_back({r, c, g(r, c)});
      if (2 * static_cast<int>(nz.size()) > blk.n * blk.n) nz.clear();
      blk.nonzeros.push_back(std::move(nz));
      const double g2 = blk.G.back().squaredNorm();
      for (const auto& [j, w] : t.coefficients) col_norm2[j] += w * w * g2;
    }
  }

  // Variable equilibration: x_j = d_j y_j.
  VectorXd d(m);
  for (int j = 0; j < m; ++j) {
    if (!(col_norm2[j] > 0.0)) {
      std::ostringstream msg;
      msg << "sdp::Solve: variable " << j << " does not enter any block";
      throw std::invalid_argument(msg.str());
    }
    d[j] = 1.0 / std::sqrt(col_norm2[j]);
  }
  for (auto& blk : blocks) {
    for (auto& c : blk.coeff) {
      for (auto& [j, w] : c) w *= d[j];
    }
  }
  VectorXd b = -problem.objective.cwiseProduct(d);
  const double b_scale = std::max(b.norm(), 1e-300);
  b /= b_scale;

  double total_dim = 0.0;
  double c_norm2 = 0.0;
  for (auto& blk : blocks) {
    total_dim += blk.n;
    c_norm2 += blk.C.squaredNorm();
    const double rn = std::sqrt(static_cast<double>(blk.n));
    const double xi = std::max(10.0, rn);
    const double eta = std::max({10.0, rn, blk.C.norm()});
    blk.X = xi * MatrixXd::Identity(blk.n, blk.n);
    blk.S = eta * MatrixXd::Identity(blk.n, blk.n);
  }
  const double c_norm = std::sqrt(c_norm2);
  const double b_norm = b.norm();

  VectorXd y = VectorXd::Zero(m);
  Result result;
  std::vector<MatrixXd> rd(blocks.size());

  // Best iterate seen so far, ranked by the largest of gap and residuals.
  struct Snapshot {
    double merit{std::numeric_limits<double>::infinity()};
    VectorXd y;
    std::vector<MatrixXd> X, S;
    double pobj, dobj, gap, pinf, dinf;
    int iteration;
  } best;

  // Last iterate whose slack factorized with a negligible residual: its y
  // satisfies the LMIs even when the run later fails.
  VectorXd feasible_y;
  double feasible_dinf = 0.0;

  auto finish = [&](Status status, const std::string& message) {
    if (status == Status::kNumericalFailure || status == Status::kMaxIterations) {
      if (best.merit >= options.acceptable_tolerance && feasible_y.size() == m) {
        y = feasible_y;
        result.dual_infeasibility = feasible_dinf;
      }
      if (best.merit < options.acceptable_tolerance) {
        y = best.y;
        for (size_t k = 0; k < blocks.size(); ++k) {
          blocks[k].X = best.X[k];
          blocks[k].S = best.S[k];
        }
        result.primal_objective = best.pobj;
        result.dual_objective = best.dobj;
        result.relative_gap = best.gap;
        result.primal_infeasibility = best.pinf;
        result.dual_infeasibility = best.dinf;
        status = Status::kOptimal;
        result.iterations = best.iteration;
        result.status = status;
        result.message = "converged to reduced accuracy (" + message + ")";
      }
    }
    result.status = status;
    if (result.message.empty()) result.message = message;
    result.x = y.cwiseProduct(d);
    result.objective = problem.objective.dot(result.x);
    result.block_max_eigenvalue.resize(blocks.size());
    result.block_multiplier_share.resize(blocks.size());
    double trace_total = 0.0;
    for (const auto& blk : blocks) trace_total += blk.X.trace();
    for (size_t k = 0; k < blocks.size(); ++k) {
      const LmiBlock& src = problem.blocks[k];
      const MatrixXd f = Sym(src.Evaluate(result.x));
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(f, Eigen::EigenvaluesOnly);
      result.block_max_eigenvalue[k] =
          eig.eigenvalues().maxCoeff() / BlockScale(src);
      result.block_multiplier_share[k] =
          trace_total > 0.0 ? blocks[k].X.trace() / trace_total : 0.0;
    }
    return result;
  };

  std::vector<MatrixXd> W;  // scratch for the Schur complement
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    // Residuals and objective values.
    VectorXd ax = VectorXd::Zero(m);
    double pobj = 0.0;
    double mu_num = 0.0;
    double rd_norm2 = 0.0;
    for (size_t k = 0; k < blocks.size(); ++k) {
      WorkBlock& blk = blocks[k];
      AddAdjoint(blk, blk.X, &ax);
      pobj += TraceProduct(blk.C, blk.X);
      mu_num += TraceProduct(blk.X, blk.S);
      rd[k] = blk.C - Operator(blk, y) - blk.S;
      rd_norm2 += rd[k].squaredNorm();
    }
    const VectorXd rp = b - ax;
    const double dobj = b.dot(y);
    const double mu = mu_num / total_dim;
    const double rel_gap =
        std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double pinf = rp.norm() / (1.0 + b_norm);
    const double dinf = std::sqrt(rd_norm2) / (1.0 + c_norm);
    result.primal_objective = pobj;
    result.dual_objective = dobj;
    result.relative_gap = rel_gap;
    result.primal_infeasibility = pinf;
    result.dual_infeasibility = dinf;

    if (options.verbose) {
      std::fprintf(stderr,
                   "sdp it %3d pobj % .10e dobj % .10e gap %.2e pinf %.2e "
                   "dinf %.2e mu %.2e\n",
                   iter, pobj, dobj, rel_gap, pinf, dinf, mu);
    }
    if (!std::isfinite(pobj) || !std::isfinite(dobj) || !std::isfinite(mu)) {
      return finish(Status::kNumericalFailure, "non-finite iterate");
    }
    const double merit = std::max({rel_gap, pinf, dinf});
    if (merit < best.merit) {
      best.merit = merit;
      best.y = y;
      best.X.resize(blocks.size());
      best.S.resize(blocks.size());
      for (size_t k = 0; k < blocks.size(); ++k) {
        best.X[k] = blocks[k].X;
        best.S[k] = blocks[k].S;
      }
      best.pobj = pobj;
      best.dobj = dobj;
      best.gap = rel_gap;
      best.pinf = pinf;
      best.dinf = dinf;
      best.iteration = iter;
    }
    if (rel_gap < options.gap_tolerance &&
        pinf < options.feasibility_tolerance &&
        dinf < options.feasibility_tolerance) {
      return finish(Status::kOptimal, "converged");
    }
    // A primal ray certifies that no y satisfies the LMIs.
    {
      double trace_x = 0.0;
      for (const auto& blk : blocks) trace_x += blk.X.trace();
      if (pobj < 0.0 && trace_x > 1e6) {
        VectorXd az = VectorXd::Zero(m);
        double cz = 0.0;
        for (const auto& blk : blocks) {
          AddAdjoint(blk, blk.X, &az);
          cz += TraceProduct(blk.C, blk.X);
        }
        if (az.norm() < options.infeasibility_tolerance * (-cz) * 1e3 ||
            (az.norm() / trace_x < options.infeasibility_tolerance &&
             -cz / trace_x > 1e-6)) {
          return finish(Status::kInfeasible,
                        "primal ray certifies infeasible LMIs");
        }
      }
    }
    if (iter == options.max_iterations) break;

    // Schur complement M_ij = tr(A_i X A_j S⁻¹).
    MatrixXd M = MatrixXd::Zero(m, m);
    VectorXd a_sinv = VectorXd::Zero(m);
    VectorXd a_xrs = VectorXd::Zero(m);
    bool factor_ok = true;
    for (size_t k = 0; k < blocks.size(); ++k) {
      WorkBlock& blk = blocks[k];
      Eigen::LLT<MatrixXd> llt(blk.S);
      if (llt.info() != Eigen::Success) {
        factor_ok = false;
        break;
      }
      blk.S_inv = llt.solve(MatrixXd::Identity(blk.n, blk.n));
      blk.S_inv = Sym(blk.S_inv);
      AddAdjoint(blk, blk.S_inv, &a_sinv);
      AddAdjoint(blk, blk.X * rd[k] * blk.S_inv, &a_xrs);

      const size_t nl = blk.G.size();
      W.resize(nl);
      for (size_t l = 0; l < nl; ++l) {
        const auto& nz = blk.nonzeros[l];
        if (!nz.empty() && static_cast<int>(nz.size()) < 2 * blk.n) {
          W[l].setZero(blk.n, blk.n);
          for (const Entry& e : nz) {
            W[l].noalias() +=
                e.value * blk.X.col(e.row) * blk.S_inv.row(e.col);
          }
        } else {
          W[l].noalias() = blk.X * blk.G[l] * blk.S_inv;
        }
      }
      for (size_t l = 0; l < nl; ++l) {
        for (size_t q = l; q < nl; ++q) {
          const double v = TermTrace(blk, q, W[l]);
          if (v == 0.0) continue;
          for (const auto& [i, wi] : blk.coeff[l]) {
            for (const auto& [j, wj] : blk.coeff[q]) {
              const double add = wi * wj * v;
              M(i, j) += add;
              if (q != l) M(j, i) += add;
            }
          }
        }
      }
    }
    if (!factor_ok) {
      return finish(Status::kNumericalFailure, "dual slack lost definiteness");
    }
    if (dinf < options.feasibility_tolerance) {
      feasible_y = y;
      feasible_dinf = dinf;
    }
    M = Sym(M);
    Eigen::LLT<MatrixXd> m_llt(M);
    if (m_llt.info() != Eigen::Success) {
      const double reg = 1e-13 * M.diagonal().maxCoeff();
      M.diagonal().array() += reg;
      m_llt.compute(M);
      if (m_llt.info() != Eigen::Success) {
        return finish(Status::kNumericalFailure,
                      "Schur complement is not positive definite");
      }
    }

    auto solve_direction = [&](double target_mu, const VectorXd& extra_rhs,
                               const std::vector<MatrixXd>* corr) {
      Direction dir;
      const VectorXd rhs = b - target_mu * a_sinv + a_xrs + extra_rhs;
      dir.dy = m_llt.solve(rhs);
      dir.dX.resize(blocks.size());
      dir.dS.resize(blocks.size());
      for (size_t k = 0; k < blocks.size(); ++k) {
        const WorkBlock& blk = blocks[k];
        dir.dS[k] = rd[k] - Operator(blk, dir.dy);
        MatrixXd dx = target_mu * blk.S_inv - blk.X -
                      Sym(blk.X * dir.dS[k] * blk.S_inv);
        if (corr != nullptr) dx -= Sym((*corr)[k]);
        dir.dX[k] = Sym(dx);
      }
      return dir;
    };
    auto step_lengths = [&](const Direction& dir) {
      double ap = std::numeric_limits<double>::infinity();
      double ad = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < blocks.size(); ++k) {
        ap = std::min(ap, MaxStep(blocks[k].X, dir.dX[k]));
        ad = std::min(ad, MaxStep(blocks[k].S, dir.dS[k]));
      }
      return std::pair{ap, ad};
    };

    // Predictor.
    const Direction aff = solve_direction(0.0, VectorXd::Zero(m), nullptr);
    auto [ap_aff, ad_aff] = step_lengths(aff);
    ap_aff = std::min(1.0, ap_aff);
    ad_aff = std::min(1.0, ad_aff);
    double mu_aff = 0.0;
    for (size_t k = 0; k < blocks.size(); ++k) {
      mu_aff += TraceProduct(blocks[k].X + ap_aff * aff.dX[k],
                             blocks[k].S + ad_aff * aff.dS[k]);
    }
    mu_aff /= total_dim;
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector with the second-order term ΔX_aff ΔS_aff S⁻¹.
    std::vector<MatrixXd> corr(blocks.size());
    VectorXd a_corr = VectorXd::Zero(m);
    for (size_t k = 0; k < blocks.size(); ++k) {
      corr[k] = aff.dX[k] * aff.dS[k] * blocks[k].S_inv;
      AddAdjoint(blocks[k], corr[k], &a_corr);
    }
    const Direction dir = solve_direction(sigma * mu, a_corr, &corr);
    auto [ap, ad] = step_lengths(dir);
    const double frac = options.step_fraction;
    ap = std::min(1.0, frac * ap);
    ad = std::min(1.0, frac * ad);
    if (!(ap > 0.0) || !(ad > 0.0) || !std::isfinite(ap) ||
        !std::isfinite(ad)) {
      return finish(Status::kNumericalFailure, "zero step length");
    }

    for (size_t k = 0; k < blocks.size(); ++k) {
      blocks[k].X = Sym(blocks[k].X + ap * dir.dX[k]);
      blocks[k].S = Sym(blocks[k].S + ad * dir.dS[k]);
    }
    y += ad * dir.dy;
  }
  return finish(Status::kMaxIterations, "iteration limit reached");
}

}  // namespace sdp
}  // namespace pmsm_lpv
