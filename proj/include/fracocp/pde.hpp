#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fracocp/assembly.hpp"
#include "fracocp/mesh.hpp"

// Discrete state and adjoint solves, and exact integration of the
// Moreau-Yosida positive-part term.  The penalty argument w = mu + g(u - ub)
// is piecewise linear over all nodes (boundary included, where u vanishes);
// every integral of (w)+ splits each sign-changing cell at the interior root
// and is then a polynomial integral, evaluated exactly.

namespace fracocp {

namespace detail {

struct CellPositivePart {
  double load_left = 0.0;   // int (w)+ * N_left over the cell
  double load_right = 0.0;  // int (w)+ * N_right
  double l1 = 0.0;          // int (w)+
  double l2sq = 0.0;        // int (w)+^2
  double m_ll = 0.0, m_lr = 0.0, m_rr = 0.0;  // int N N over {w > 0}
  bool active = false;
};

// Exact integrals over one cell of width h with endpoint values w0, w1.
// Degree <= 2 integrands on the positive subinterval: 2-point Gauss is exact.
inline CellPositivePart positive_part_cell(double w0, double w1, double h) {
  CellPositivePart r;
  if (w0 <= 0.0 && w1 <= 0.0) return r;
  r.active = true;
  double t0 = 0.0, t1 = 1.0;
  if (w0 < 0.0) t0 = w0 / (w0 - w1);        // root, w crosses upward
  else if (w1 < 0.0) t1 = w0 / (w0 - w1);   // crosses downward
  static constexpr double gp = 0.5773502691896257645091488;  // 1/sqrt(3)
  const double mid = 0.5 * (t0 + t1), half = 0.5 * (t1 - t0);
  for (double tg : {mid - half * gp, mid + half * gp}) {
    const double w = w0 + (w1 - w0) * tg;
    const double wl = h * half;  // Gauss weight times jacobian
    r.load_left += wl * w * (1.0 - tg);
    r.load_right += wl * w * tg;
    r.l1 += wl * w;
    r.l2sq += wl * w * w;
    r.m_ll += wl * (1.0 - tg) * (1.0 - tg);
    r.m_lr += wl * tg * (1.0 - tg);
    r.m_rr += wl * tg * tg;
  }
  return r;
}

}  // namespace detail

struct PositivePartLoad {
  Eigen::VectorXd load;           // int (w)+ phi_i, interior nodes
  std::vector<int> active_cells;  // discrete active region
  double l1 = 0.0;                // exact L1 norm of (w)+
};

/// Exact load vector of the positive part of a piecewise-linear w given by
/// its full nodal values (size cells()+1, boundary included).
inline PositivePartLoad positive_part_load(const Mesh& mesh, const Eigen::VectorXd& w_full) {
  const int n = mesh.cells();
  if (w_full.size() != n + 1)
    throw std::invalid_argument("positive_part_load: w must have one value per node");
  PositivePartLoad out;
  out.load = Eigen::VectorXd::Zero(n - 1);
  for (int k = 0; k < n; ++k) {
    const auto c = detail::positive_part_cell(w_full[k], w_full[k + 1], mesh.width(k));
    if (!c.active) continue;
    out.active_cells.push_back(k);
    out.l1 += c.l1;
    if (k >= 1) out.load[k - 1] += c.load_left;
    if (k + 1 <= n - 1) out.load[k] += c.load_right;
  }
  return out;
}

/// Exact L2 norm of (w)+.
inline double positive_part_l2norm(const Mesh& mesh, const Eigen::VectorXd& w_full) {
  const int n = mesh.cells();
  if (w_full.size() != n + 1)
    throw std::invalid_argument("positive_part_l2norm: w must have one value per node");
  double acc = 0.0;
  for (int k = 0; k < n; ++k)
    acc += detail::positive_part_cell(w_full[k], w_full[k + 1], mesh.width(k)).l2sq;
  return std::sqrt(acc);
}

/// Exact partial mass matrix int_{w>0} phi_i phi_j (interior nodes); this is
/// the derivative of positive_part_load with respect to the nodal values.
inline TriDiag positive_part_mass(const Mesh& mesh, const Eigen::VectorXd& w_full) {
  const int n = mesh.cells();
  TriDiag T;
  T.diag = Eigen::VectorXd::Zero(n - 1);
  T.off = Eigen::VectorXd::Zero(std::max(0, n - 2));
  for (int k = 0; k < n; ++k) {
    const auto c = detail::positive_part_cell(w_full[k], w_full[k + 1], mesh.width(k));
    if (!c.active) continue;
    if (k >= 1) T.diag[k - 1] += c.m_ll;
    if (k + 1 <= n - 1) T.diag[k] += c.m_rr;
    if (k >= 1 && k + 1 <= n - 1) T.off[k - 1] += c.m_lr;
  }
  return T;
}

/// Full nodal values of mu + gamma (u - u_b); u has zero boundary values.
inline Eigen::VectorXd penalty_argument(const P1Function& u, const Eigen::VectorXd& mu_full,
                                        double gamma, double u_b) {
  const int n = u.mesh->cells();
  Eigen::VectorXd w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = mu_full[i] + gamma * (u.nodal(i) - u_b);
  return w;
}

/// Interior rows of the full P1 mass matrix applied to nodal values that may
/// be nonzero on the boundary (used for the u_d tracking term).
inline Eigen::VectorXd mass_apply_full(const Mesh& mesh, const Eigen::VectorXd& w_full) {
  const int n = mesh.cells();
  Eigen::VectorXd r(n - 1);
  for (int i = 1; i < n; ++i) {
    const double h0 = mesh.width(i - 1), h1 = mesh.width(i);
    r[i - 1] = h0 / 6.0 * w_full[i - 1] + (h0 + h1) / 3.0 * w_full[i] + h1 / 6.0 * w_full[i + 1];
  }
  return r;
}

/// Exact squared L2 norm of the piecewise-linear interpolant with the given
/// full nodal values.
inline double l2sq_full(const Mesh& mesh, const Eigen::VectorXd& w_full) {
  double acc = 0.0;
  for (int k = 0; k < mesh.cells(); ++k) {
    const double w0 = w_full[k], w1 = w_full[k + 1];
    acc += mesh.width(k) / 3.0 * (w0 * w0 + w0 * w1 + w1 * w1);
  }
  return acc;
}

namespace detail {
inline Eigen::VectorXd checked_solve(const FracOperator& op, const Eigen::VectorXd& rhs,
                                     const char* what) {
  Eigen::VectorXd x = op.factorization().solve(rhs);
  const double scale = rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0;
  double res = (op.stiffness() * x - rhs).cwiseAbs().maxCoeff();
  if (res > 1e-10 * scale) {
    x += op.factorization().solve(rhs - op.stiffness() * x);  // one refinement pass
    res = (op.stiffness() * x - rhs).cwiseAbs().maxCoeff();
    if (res > 1e-10 * scale)
      throw std::runtime_error(std::string(what) + ": residual contract violated");
  }
  return x;
}
}  // namespace detail

/// Discrete state solve A u = B z.
inline P1Function solve_state(const FracOperator& op, const P0Function& z) {
  if (z.mesh->cells() != op.mesh().cells())
    throw std::invalid_argument("solve_state: control lives on a different mesh");
  Eigen::VectorXd rhs = op.apply_coupling(z.values);
  return P1Function(op.mesh_ptr(), detail::checked_solve(op, rhs, "solve_state"));
}

/// Adjoint data: state u, desired state and multiplier shift by full nodal
/// values, regularization gamma and state bound u_b.
struct AdjointProblem {
  const FracOperator& op;
  const P1Function& u;
  Eigen::VectorXd ud_full;  // P1 interpolant of the desired state
  Eigen::VectorXd mu_full;  // multiplier shift, >= 0
  double gamma;
  double u_b;
};

/// Adjoint solve A xi = M (u - u_d) + int (mu + gamma(u - u_b))+ phi.
inline P1Function solve_adjoint(const AdjointProblem& prob) {
  if (!(prob.gamma > 0.0)) throw std::invalid_argument("solve_adjoint: gamma must be positive");
  if (prob.mu_full.minCoeff() < 0.0)
    throw std::invalid_argument("solve_adjoint: multiplier shift must be nonnegative");
  const Mesh& mesh = prob.op.mesh();
  Eigen::VectorXd diff = prob.u.full_nodal() - prob.ud_full;
  Eigen::VectorXd rhs = mass_apply_full(mesh, diff);
  const Eigen::VectorXd w = penalty_argument(prob.u, prob.mu_full, prob.gamma, prob.u_b);
  rhs += positive_part_load(mesh, w).load;
  return P1Function(prob.op.mesh_ptr(), detail::checked_solve(prob.op, rhs, "solve_adjoint"));
}

}  // namespace fracocp
