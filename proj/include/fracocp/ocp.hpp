#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fracocp/analysis.hpp"
#include "fracocp/assembly.hpp"
#include "fracocp/mesh.hpp"
#include "fracocp/pde.hpp"

// The reduced regularized optimal control problem
//
//   min_z  1/2 ||S_h z - u_d||^2 + alpha/2 ||z||^2
//            + 1/(2 gamma) ||(mu + gamma (S_h z - u_b))_+||^2,   z in Z_ad,
//
// with Z_ad either all of L2 or a cellwise box.  All norms are exact
// (mass matrices and kink-splitting), so the adjoint-based L2 gradient
// alpha z + Pi_0 xi is the exact gradient of the discrete objective.

namespace fracocp {

/// Desired-state specification: a closed-form bump profile, a constant, or
/// explicit nodal values.
struct DesiredState {
  enum class Kind { Getoor, Constant, Nodal } kind = Kind::Getoor;
  double value = 0.0;
  Eigen::VectorXd nodal;  // size cells()+1 when kind == Nodal

  static DesiredState getoor() { return {}; }
  static DesiredState constant(double c) { return {Kind::Constant, c, {}}; }
  static DesiredState nodal_values(Eigen::VectorXd v) {
    return {Kind::Nodal, 0.0, std::move(v)};
  }
};

/// Multiplier-shift specification (the fixed nonnegative mu in the penalty).
struct MultiplierShift {
  enum class Kind { Constant, Nodal } kind = Kind::Constant;
  double value = 0.0;
  Eigen::VectorXd nodal;

  static MultiplierShift zero() { return {}; }
  static MultiplierShift constant(double c) { return {Kind::Constant, c, {}}; }
  static MultiplierShift nodal_values(Eigen::VectorXd v) {
    return {Kind::Nodal, 0.0, std::move(v)};
  }
};

enum class OptimizerMode { ProjectedGradient, SemismoothNewton };

/// Full continuous problem description.
struct ProblemConfig {
  double s = 0.5;
  double alpha = 1e-2;  // Tikhonov weight
  DesiredState u_d;
  double u_b = 0.1;  // state bound u <= u_b
  MultiplierShift mu_hat;
  std::optional<std::pair<double, double>> control_bounds;  // absent: unconstrained
  double opt_tol = 1e-6;
  int max_iter = 100000;
  OptimizerMode optimizer = OptimizerMode::SemismoothNewton;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("ProblemConfig: alpha must be positive");
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("ProblemConfig: s must lie in (0,1)");
    if (!(s > 0.25))
      throw std::invalid_argument(
          "ProblemConfig: s = " + std::to_string(s) +
          " rejected: with L2 controls in one dimension the state map reaches "
          "C_0 only for s > N/4 = 1/4 (the exponent condition p > N/(2s) with "
          "p = 2, N = 1); smaller s needs L^p controls with p > 1/(2s)");
    if (control_bounds && !(control_bounds->first < control_bounds->second))
      throw std::invalid_argument("ProblemConfig: control bounds must satisfy z_lo < z_hi");
    if (!(opt_tol > 0.0)) throw std::invalid_argument("ProblemConfig: opt_tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("ProblemConfig: max_iter must be positive");
  }
};

/// Nodal interpolant (all nodes) of the configured desired state.
inline Eigen::VectorXd desired_state_nodal(const ProblemConfig& cfg, const Mesh& mesh) {
  const int n = mesh.cells();
  Eigen::VectorXd v(n + 1);
  switch (cfg.u_d.kind) {
    case DesiredState::Kind::Getoor: {
      const double c = 0.5 * (mesh.a() + mesh.b()), r = 0.5 * (mesh.b() - mesh.a());
      for (int i = 0; i <= n; ++i) v[i] = getoor_profile(cfg.s, mesh.node(i) - c, r);
      break;
    }
    case DesiredState::Kind::Constant:
      v.setConstant(cfg.u_d.value);
      break;
    case DesiredState::Kind::Nodal:
      if (cfg.u_d.nodal.size() != n + 1)
        throw std::invalid_argument("desired_state_nodal: nodal data size mismatch");
      v = cfg.u_d.nodal;
      break;
  }
  return v;
}

/// Nodal values (all nodes) of the multiplier shift; must be nonnegative.
inline Eigen::VectorXd multiplier_shift_nodal(const ProblemConfig& cfg, const Mesh& mesh) {
  const int n = mesh.cells();
  Eigen::VectorXd v(n + 1);
  switch (cfg.mu_hat.kind) {
    case MultiplierShift::Kind::Constant:
      v.setConstant(cfg.mu_hat.value);
      break;
    case MultiplierShift::Kind::Nodal:
      if (cfg.mu_hat.nodal.size() != n + 1)
        throw std::invalid_argument("multiplier_shift_nodal: nodal data size mismatch");
      v = cfg.mu_hat.nodal;
      break;
  }
  if (v.minCoeff() < 0.0)
    throw std::invalid_argument("multiplier shift must be nonnegative");
  return v;
}

/// Cellwise clamp onto the admissible box; identity when bounds are absent.
inline P0Function project_control(const P0Function& z,
                                  const std::optional<std::pair<double, double>>& bounds) {
  if (!bounds) return z;
  Eigen::VectorXd v = z.values.cwiseMax(bounds->first).cwiseMin(bounds->second);
  return P0Function(z.mesh, std::move(v));
}

struct OcpSolution {
  P0Function z;
  P1Function u;
  P1Function xi;
  double gamma = 0.0;
  double objective = 0.0;       // J^gamma at z
  double objective_plain = 0.0; // J at z (no penalty)
  double kkt_residual = 0.0;
  double fixed_point_residual = 0.0;  // ||z - P(-Pi0 xi / alpha)||_L2
  double multiplier_l1 = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PathRecord {
  double gamma, J, Jgamma, viol_l2, viol_sup, mult_l1, dz_l2, kkt, omega, Jgamma_ref;
  int iters;
  bool converged;
};

struct PathReport {
  double gamma0 = 0.0, factor = 0.0;
  int count = 0;
  std::vector<PathRecord> rows;
};

/// Recovered multiplier approximation (mu + gamma (u - u_b))_+ with exact
/// norms; the nodal vector is the P1 interpolant for plotting.
struct MultiplierRecord {
  Eigen::VectorXd nodal;  // all nodes, max(w_i, 0)
  double l1 = 0.0;
  double l2 = 0.0;
  std::vector<int> active_cells;
};

inline MultiplierRecord recover_multiplier(const ProblemConfig& cfg, const P1Function& u,
                                           double gamma) {
  const Mesh& mesh = *u.mesh;
  const Eigen::VectorXd mu = multiplier_shift_nodal(cfg, mesh);
  const Eigen::VectorXd w = penalty_argument(u, mu, gamma, cfg.u_b);
  MultiplierRecord rec;
  rec.nodal = w.cwiseMax(0.0);
  auto pp = positive_part_load(mesh, w);
  rec.l1 = pp.l1;
  rec.l2 = positive_part_l2norm(mesh, w);
  rec.active_cells = std::move(pp.active_cells);
  return rec;
}

// ---------------------------------------------------------------------------
// Solver

/// Shared per-(mesh,s) solver state: realized data and, for the Newton mode,
/// the dense solution operator W = A^{-1} B (built once, reused across gamma).
class OcpSolver {
 public:
  OcpSolver(const ProblemConfig& cfg, const FracOperator& op)
      : cfg_(cfg),
        op_(op),
        ud_(desired_state_nodal(cfg, op.mesh())),
        mu_(multiplier_shift_nodal(cfg, op.mesh())),
        widths_(op.mesh().cells()) {
    cfg_.validate();
    for (int k = 0; k < op.mesh().cells(); ++k) widths_[k] = op.mesh().width(k);
  }

  const ProblemConfig& config() const { return cfg_; }
  const FracOperator& op() const { return op_; }

  double control_l2(const Eigen::VectorXd& z) const {
    return std::sqrt(z.cwiseAbs2().dot(widths_));
  }

  /// J^gamma and the plain tracking objective at z.
  std::pair<double, double> objectives(const Eigen::VectorXd& z, double gamma) const {
    const Eigen::VectorXd u = op_.factorization().solve(op_.apply_coupling(z));
    return objectives_given_state(z, u, gamma);
  }

  struct Evaluation {
    Eigen::VectorXd u;       // interior nodal state
    Eigen::VectorXd w;       // penalty argument, full nodes
    Eigen::VectorXd xi;      // interior nodal adjoint
    Eigen::VectorXd grad;    // cellwise L2 gradient alpha z + Pi0 xi
    double Jgamma = 0.0, Jplain = 0.0;
    double kkt = 0.0;
    double mult_l1 = 0.0;
  };

  Evaluation evaluate(const Eigen::VectorXd& z, double gamma) const {
    Evaluation ev;
    ev.u = op_.factorization().solve(op_.apply_coupling(z));
    const Mesh& mesh = op_.mesh();
    P1Function uf(op_.mesh_ptr(), ev.u);
    ev.w = penalty_argument(uf, mu_, gamma, cfg_.u_b);
    auto pp = positive_part_load(mesh, ev.w);
    ev.mult_l1 = pp.l1;
    std::tie(ev.Jgamma, ev.Jplain) = objectives_given_state(z, ev.u, gamma);
    Eigen::VectorXd rhs = mass_apply_full(mesh, uf.full_nodal() - ud_) + pp.load;
    ev.xi = op_.factorization().solve(rhs);
    ev.grad = cfg_.alpha * z + op_.apply_coupling_t(ev.xi).cwiseQuotient(widths_);
    ev.kkt = kkt_residual_from(z, ev.grad);
    return ev;
  }

  /// ||z - P(z - g)||_L2, the step-1 projected-gradient residual.
  double kkt_residual_from(const Eigen::VectorXd& z, const Eigen::VectorXd& g) const {
    Eigen::VectorXd trial = z - g;
    if (cfg_.control_bounds)
      trial = trial.cwiseMax(cfg_.control_bounds->first).cwiseMin(cfg_.control_bounds->second);
    return control_l2(z - trial);
  }

  Eigen::VectorXd project(Eigen::VectorXd z) const {
    if (cfg_.control_bounds)
      z = z.cwiseMax(cfg_.control_bounds->first).cwiseMin(cfg_.control_bounds->second);
    return z;
  }

  OcpSolution solve(double gamma, const P0Function& z0, OptimizerMode mode) const {
    if (!(gamma > 0.0)) throw std::invalid_argument("solve: gamma must be positive");
    if (z0.mesh->cells() != op_.mesh().cells())
      throw std::invalid_argument("solve: initial control on a different mesh");
    Eigen::VectorXd z = project(z0.values);
    int iters = 0;
    bool converged = false;
    Evaluation ev = evaluate(z, gamma);
    if (mode == OptimizerMode::ProjectedGradient)
      converged = run_projected_gradient(z, gamma, ev, iters);
    else
      converged = run_semismooth_newton(z, gamma, ev, iters);
    return finalize(z, gamma, ev, iters, converged);
  }

  const Eigen::VectorXd& desired_full() const { return ud_; }
  const Eigen::VectorXd& shift_full() const { return mu_; }

  /// Dense solution operator (built on first use by the Newton mode).
  const Eigen::MatrixXd& solution_operator() const {
    if (W_.size() == 0) W_ = op_.factorization().solve(op_.coupling_dense());
    return W_;
  }

 private:
  std::pair<double, double> objectives_given_state(const Eigen::VectorXd& z,
                                                   const Eigen::VectorXd& u,
                                                   double gamma) const {
    const Mesh& mesh = op_.mesh();
    P1Function uf(op_.mesh_ptr(), u);
    const double track = 0.5 * l2sq_full(mesh, uf.full_nodal() - ud_);
    const double reg = 0.5 * cfg_.alpha * z.cwiseAbs2().dot(widths_);
    const Eigen::VectorXd w = penalty_argument(uf, mu_, gamma, cfg_.u_b);
    const double pen = positive_part_l2norm(mesh, w);
    const double Jplain = track + reg;
    return {Jplain + 0.5 / gamma * pen * pen, Jplain};
  }

  double dir_inner(const Eigen::VectorXd& g, const Eigen::VectorXd& d) const {
    return g.cwiseProduct(d).dot(widths_);
  }

  // Projected gradient with Armijo backtracking along the projected arc
  // (c = 1e-4, shrink 0.5, initial step 1/alpha).
  bool run_projected_gradient(Eigen::VectorXd& z, double gamma, Evaluation& ev,
                              int& iters) const {
    constexpr double c1 = 1e-4;
    for (iters = 0; iters < cfg_.max_iter; ++iters) {
      if (ev.kkt <= cfg_.opt_tol * (1.0 + control_l2(z))) return true;
      double t = 1.0 / cfg_.alpha;
      bool stepped = false;
      while (t > 1e-18 / cfg_.alpha) {
        Eigen::VectorXd zt = project(z - t * ev.grad);
        const double pred = dir_inner(ev.grad, zt - z);
        if (pred >= 0.0) break;  // no feasible descent along this arc
        auto [Jt, ignored] = objectives(zt, gamma);
        (void)ignored;
        if (Jt <= ev.Jgamma + c1 * pred) {
          z = std::move(zt);
          ev = evaluate(z, gamma);
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) return ev.kkt <= cfg_.opt_tol * (1.0 + control_l2(z));
    }
    return false;
  }

  // Semismooth Newton: the positive part is exactly integrated, so its
  // derivative with respect to the nodal state is the partial mass matrix
  // over the active region; the reduced Newton matrix
  //   alpha D + W^T (M + gamma M_active) W
  // is SPD.  Box bounds are handled by freezing the active cells and doing a
  // projected Armijo search on the objective.
  bool run_semismooth_newton(Eigen::VectorXd& z, double gamma, Evaluation& ev,
                             int& iters) const {
    constexpr double c1 = 1e-4;
    const Eigen::MatrixXd& W = solution_operator();
    const int n = op_.mesh().cells();
    for (iters = 0; iters < cfg_.max_iter; ++iters) {
      if (ev.kkt <= cfg_.opt_tol * (1.0 + control_l2(z))) return true;
      TriDiag T = op_.mass();
      T.axpy(gamma, positive_part_mass(op_.mesh(), ev.w));
      Eigen::MatrixXd N = W.transpose() * T.apply_dense(W);
      N.diagonal() += cfg_.alpha * widths_;

      Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
      std::vector<int> inactive;
      inactive.reserve(n);
      if (cfg_.control_bounds) {
        const auto [lo, hi] = *cfg_.control_bounds;
        for (int k = 0; k < n; ++k) {
          const bool clamped = (z[k] <= lo && ev.grad[k] > 0.0) || (z[k] >= hi && ev.grad[k] < 0.0);
          if (!clamped) inactive.push_back(k);
        }
      } else {
        for (int k = 0; k < n; ++k) inactive.push_back(k);
      }
      if (!inactive.empty()) {
        const int m = static_cast<int>(inactive.size());
        Eigen::MatrixXd Nii(m, m);
        Eigen::VectorXd rhs(m);
        for (int p = 0; p < m; ++p) {
          rhs[p] = -widths_[inactive[p]] * ev.grad[inactive[p]];
          for (int q = 0; q < m; ++q) Nii(p, q) = N(inactive[p], inactive[q]);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(Nii);
        Eigen::VectorXd di = (llt.info() == Eigen::Success)
                                 ? Eigen::VectorXd(llt.solve(rhs))
                                 : Eigen::VectorXd(Nii.ldlt().solve(rhs));
        for (int p = 0; p < m; ++p) d[inactive[p]] = di[p];
      }

      double t = 1.0;
      bool stepped = false;
      while (t > 1e-16) {
        Eigen::VectorXd zt = project(z + t * d);
        const double pred = dir_inner(ev.grad, zt - z);
        if (pred >= 0.0) break;
        auto [Jt, ignored] = objectives(zt, gamma);
        (void)ignored;
        if (Jt <= ev.Jgamma + c1 * pred) {
          z = std::move(zt);
          ev = evaluate(z, gamma);
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) {
        // Newton direction blocked by the bounds; fall back to one
        // projected-gradient step before giving up
        double tg = 1.0 / cfg_.alpha;
        while (tg > 1e-18 / cfg_.alpha) {
          Eigen::VectorXd zt = project(z - tg * ev.grad);
          const double pred = dir_inner(ev.grad, zt - z);
          if (pred >= 0.0) break;
          auto [Jt, ignored2] = objectives(zt, gamma);
          (void)ignored2;
          if (Jt <= ev.Jgamma + c1 * pred) {
            z = std::move(zt);
            ev = evaluate(z, gamma);
            stepped = true;
            break;
          }
          tg *= 0.5;
        }
        if (!stepped) return ev.kkt <= cfg_.opt_tol * (1.0 + control_l2(z));
      }
    }
    return false;
  }

  OcpSolution finalize(const Eigen::VectorXd& z, double gamma, const Evaluation& ev, int iters,
                       bool converged) const {
    P0Function zf(op_.mesh_ptr(), z);
    P1Function uf = solve_state(op_, zf);
    AdjointProblem ap{op_, uf, ud_, mu_, gamma, cfg_.u_b};
    P1Function xif = solve_adjoint(ap);
    OcpSolution sol{std::move(zf), std::move(uf), std::move(xif)};
    sol.gamma = gamma;
    sol.objective = ev.Jgamma;
    sol.objective_plain = ev.Jplain;
    sol.kkt_residual = ev.kkt;
    sol.multiplier_l1 = ev.mult_l1;
    sol.iterations = iters;
    sol.converged = converged;
    // fixed-point identity z = P(-Pi0 xi / alpha)
    Eigen::VectorXd fp = -op_.apply_coupling_t(sol.xi.values).cwiseQuotient(widths_) / cfg_.alpha;
    if (cfg_.control_bounds)
      fp = fp.cwiseMax(cfg_.control_bounds->first).cwiseMin(cfg_.control_bounds->second);
    sol.fixed_point_residual = control_l2(z - fp);
    return sol;
  }

  ProblemConfig cfg_;
  const FracOperator& op_;
  Eigen::VectorXd ud_, mu_;
  Eigen::VectorXd widths_;
  mutable Eigen::MatrixXd W_;
};

// ---------------------------------------------------------------------------
// Free-function surface

/// J^gamma_h(z), all norms exact.
inline double objective(const ProblemConfig& cfg, const FracOperator& op, const P0Function& z,
                        double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("objective: gamma must be positive");
  return OcpSolver(cfg, op).objectives(z.values, gamma).first;
}

/// Cellwise L2 gradient alpha z + Pi_0 xi of the reduced objective.
inline P0Function gradient(const ProblemConfig& cfg, const FracOperator& op, const P0Function& z,
                           double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gradient: gamma must be positive");
  OcpSolver solver(cfg, op);
  auto ev = solver.evaluate(z.values, gamma);
  return P0Function(z.mesh, std::move(ev.grad));
}

/// Projected-gradient residual ||z - P(z - grad)||_L2; zero exactly at
/// discrete first-order points.
inline double kkt_residual(const ProblemConfig& cfg, const FracOperator& op, const P0Function& z,
                           double gamma) {
  OcpSolver solver(cfg, op);
  return solver.evaluate(z.values, gamma).kkt;
}

inline OcpSolution solve_fixed_gamma(const ProblemConfig& cfg, const FracOperator& op,
                                     double gamma, const P0Function& z0) {
  OcpSolver solver(cfg, op);
  return solver.solve(gamma, z0, cfg.optimizer);
}

/// gamma-continuation over gamma_k = gamma0 * factor^k, k = 0..count-1, each
/// solve warm-started from the previous solution.  The reference control for
/// the objective-chain record defaults to 0 (projected into the box).
inline PathReport gamma_continuation(const ProblemConfig& cfg, const FracOperator& op,
                                     double gamma0, double factor, int count,
                                     const P0Function* z_ref = nullptr) {
  if (!(gamma0 > 0.0) || !(factor > 1.0) || count < 1)
    throw std::invalid_argument("gamma_continuation: bad schedule");
  OcpSolver solver(cfg, op);
  PathReport report;
  report.gamma0 = gamma0;
  report.factor = factor;
  report.count = count;

  P0Function zref = z_ref ? *z_ref : P0Function::zero(op.mesh_ptr());
  zref = project_control(zref, cfg.control_bounds);
  P0Function z = zref;
  Eigen::VectorXd prev = z.values;
  for (int k = 0; k < count; ++k) {
    const double gamma = gamma0 * std::pow(factor, k);
    OcpSolution sol = solver.solve(gamma, z, cfg.optimizer);
    const auto viol = violation_norms(sol.u, cfg.u_b);
    PathRecord row;
    row.gamma = gamma;
    row.J = sol.objective_plain;
    row.Jgamma = sol.objective;
    row.viol_l2 = viol.l2;
    row.viol_sup = viol.sup;
    row.mult_l1 = sol.multiplier_l1;
    row.dz_l2 = (k == 0) ? 0.0 : solver.control_l2(sol.z.values - prev);
    row.kkt = sol.kkt_residual;
    row.omega = std::sqrt(gamma) * viol.l2;  // computable witness of the
                                             // penalty-decay modulus
    row.Jgamma_ref = solver.objectives(zref.values, gamma).first;
    row.iters = sol.iterations;
    row.converged = sol.converged;
    report.rows.push_back(row);
    prev = sol.z.values;
    z = sol.z;
    if (!sol.converged) break;  // abort the path, partial report
  }
  return report;
}

}  // namespace fracocp
