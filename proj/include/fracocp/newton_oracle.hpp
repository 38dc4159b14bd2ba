#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "fracocp/ocp.hpp"

// Independent small-instance optimizer used to cross-check the production
// solvers: an undamped active-set Newton iteration on the nonsmooth
// first-order system, with its own LU-based linear algebra, plus an
// exhaustive enumeration of nodal sign patterns as a fallback when the
// active sets cycle (feasible for n <= 8 cells).  Desk-scale by design:
// refuses more than 32 cells.

namespace fracocp {

namespace oracle_detail {

// positive-part cell integrals with the sign pattern forced externally;
// mixed cells split at the (clamped) root of the linear interpolant.
struct FrozenCell {
  double load_left = 0.0, load_right = 0.0, l2sq = 0.0;
  double m_ll = 0.0, m_lr = 0.0, m_rr = 0.0;
};

inline FrozenCell frozen_cell(double w0, double w1, double h, bool pos0, bool pos1) {
  FrozenCell r;
  if (!pos0 && !pos1) return r;
  double t0 = 0.0, t1 = 1.0;
  if (pos0 != pos1) {
    double tr = (w0 != w1) ? w0 / (w0 - w1) : 0.5;
    tr = std::min(1.0, std::max(0.0, tr));
    if (pos0) t1 = tr;
    else t0 = tr;
  }
  static constexpr double gp = 0.5773502691896257645091488;
  const double mid = 0.5 * (t0 + t1), half = 0.5 * (t1 - t0);
  for (double tg : {mid - half * gp, mid + half * gp}) {
    const double w = w0 + (w1 - w0) * tg;
    const double wl = h * half;
    r.load_left += wl * w * (1.0 - tg);
    r.load_right += wl * w * tg;
    r.l2sq += wl * w * w;
    r.m_ll += wl * (1.0 - tg) * (1.0 - tg);
    r.m_lr += wl * tg * (1.0 - tg);
    r.m_rr += wl * tg * tg;
  }
  return r;
}

}  // namespace oracle_detail

/// Independent semismooth-Newton oracle; terminates at a projected-gradient
/// residual of 1e-12 (relative) or falls back to sign-pattern enumeration.
inline OcpSolution semismooth_newton_oracle(const ProblemConfig& cfg, const FracOperator& op,
                                            double gamma, const P0Function& z0) {
  cfg.validate();
  const Mesh& mesh = op.mesh();
  const int n = mesh.cells();
  if (n > 32)
    throw std::invalid_argument("semismooth_newton_oracle: desk-scale only (n <= 32 cells)");
  if (!(gamma > 0.0))
    throw std::invalid_argument("semismooth_newton_oracle: gamma must be positive");

  const double tol = 1e-12;
  const Eigen::VectorXd ud = desired_state_nodal(cfg, mesh);
  const Eigen::VectorXd mu = multiplier_shift_nodal(cfg, mesh);
  Eigen::VectorXd h(n);
  for (int k = 0; k < n; ++k) h[k] = mesh.width(k);

  // own linear algebra: LU factorization, dense solution operator
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(op.stiffness());
  const Eigen::MatrixXd Bd = assemble_coupling(mesh);
  const Eigen::MatrixXd S = lu.solve(Bd);

  auto project = [&](Eigen::VectorXd z) {
    if (cfg.control_bounds)
      z = z.cwiseMax(cfg.control_bounds->first).cwiseMin(cfg.control_bounds->second);
    return z;
  };
  auto znorm = [&](const Eigen::VectorXd& z) { return std::sqrt(z.cwiseAbs2().dot(h)); };

  struct State {
    Eigen::VectorXd u, w, xi, g;
    double Jgamma = 0.0, kkt = 0.0, l1 = 0.0;
  };
  auto eval = [&](const Eigen::VectorXd& z) {
    State st;
    st.u = S * z;
    P1Function uf(op.mesh_ptr(), st.u);
    st.w = penalty_argument(uf, mu, gamma, cfg.u_b);
    auto pp = positive_part_load(mesh, st.w);
    st.l1 = pp.l1;
    st.xi = lu.solve(Eigen::VectorXd(mass_apply_full(mesh, uf.full_nodal() - ud) + pp.load));
    st.g = cfg.alpha * z + (Bd.transpose() * st.xi).cwiseQuotient(h);
    Eigen::VectorXd trial = project(z - st.g);
    st.kkt = znorm(z - trial);
    const double pen = positive_part_l2norm(mesh, st.w);
    st.Jgamma = 0.5 * l2sq_full(mesh, uf.full_nodal() - ud) +
                0.5 * cfg.alpha * z.cwiseAbs2().dot(h) + 0.5 / gamma * pen * pen;
    return st;
  };

  // one active-set Newton step given the current penalty active region and
  // the clamp sets from the fixed-point map
  auto newton_step = [&](const Eigen::VectorXd& z, const State& st,
                         const TriDiag& T) -> Eigen::VectorXd {
    Eigen::MatrixXd N = S.transpose() * T.apply_dense(S);
    N.diagonal() += cfg.alpha * h;
    Eigen::VectorXd znew = z;
    std::vector<int> inactive;
    if (cfg.control_bounds) {
      const auto [lo, hi] = *cfg.control_bounds;
      const Eigen::VectorXd q =
          -(Bd.transpose() * st.xi).cwiseQuotient(h) / cfg.alpha;  // unclamped candidate
      for (int k = 0; k < n; ++k) {
        if (q[k] <= lo) znew[k] = lo;
        else if (q[k] >= hi) znew[k] = hi;
        else inactive.push_back(k);
      }
    } else {
      for (int k = 0; k < n; ++k) inactive.push_back(k);
    }
    if (!inactive.empty()) {
      const int m = static_cast<int>(inactive.size());
      Eigen::MatrixXd Nii(m, m);
      Eigen::VectorXd rhs(m);
      for (int p = 0; p < m; ++p) {
        double acc = -h[inactive[p]] * st.g[inactive[p]];
        for (int k = 0; k < n; ++k)
          if (znew[k] != z[k]) acc -= N(inactive[p], k) * (znew[k] - z[k]);
        rhs[p] = acc;
        for (int q2 = 0; q2 < m; ++q2) Nii(p, q2) = N(inactive[p], inactive[q2]);
      }
      Eigen::VectorXd di = Nii.partialPivLu().solve(rhs);
      for (int p = 0; p < m; ++p) znew[inactive[p]] += di[p];
    }
    return znew;
  };

  auto signature = [&](const Eigen::VectorXd& z, const State& st) {
    std::vector<std::int8_t> sig;
    for (int i = 0; i <= n; ++i) sig.push_back(st.w[i] > 0.0 ? 1 : 0);
    if (cfg.control_bounds) {
      for (int k = 0; k < n; ++k) {
        std::int8_t c = 0;
        if (z[k] <= cfg.control_bounds->first) c = 1;
        else if (z[k] >= cfg.control_bounds->second) c = 2;
        sig.push_back(c);
      }
    }
    return sig;
  };

  auto make_solution = [&](const Eigen::VectorXd& z, const State& st, int iters,
                           bool converged) {
    P0Function zf(op.mesh_ptr(), z);
    P1Function uf(op.mesh_ptr(), st.u);
    P1Function xif(op.mesh_ptr(), st.xi);
    OcpSolution sol{std::move(zf), std::move(uf), std::move(xif)};
    sol.gamma = gamma;
    sol.objective = st.Jgamma;
    sol.kkt_residual = st.kkt;
    sol.multiplier_l1 = st.l1;
    sol.iterations = iters;
    sol.converged = converged;
    return sol;
  };

  Eigen::VectorXd z = project(z0.values);
  State st = eval(z);
  std::set<std::vector<std::int8_t>> seen;
  bool cycled = false;
  int iters = 0;
  for (; iters < 200; ++iters) {
    if (st.kkt <= tol * (1.0 + znorm(z))) return make_solution(z, st, iters, true);
    auto sig = signature(z, st);
    if (!seen.insert(sig).second) {
      cycled = true;
      break;
    }
    TriDiag T = assemble_mass_p1(mesh);
    T.axpy(gamma, positive_part_mass(mesh, st.w));
    z = newton_step(z, st, T);
    st = eval(z);
  }
  if (!cycled && st.kkt <= tol * (1.0 + znorm(z))) return make_solution(z, st, iters, true);
  const Eigen::VectorXd z_cycle = z;  // enumeration seeds: last iterate, then cold

  // exhaustive enumeration over interior nodal sign patterns
  if (n > 8)
    throw std::runtime_error(
        "semismooth_newton_oracle: active sets cycled and the instance is too "
        "large for exhaustive enumeration (n > 8)");

  const int interior = n - 1;
  const double wb_left = mu[0] - gamma * cfg.u_b;
  const double wb_right = mu[n] - gamma * cfg.u_b;
  Eigen::VectorXd best_z;
  State best_st;
  double best_J = std::numeric_limits<double>::infinity();
  bool found = false;

  for (std::uint32_t pat = 0; pat < (1u << interior); ++pat) {
    std::vector<bool> pos(n + 1);
    pos[0] = wb_left > 0.0;
    pos[n] = wb_right > 0.0;
    for (int i = 1; i < n; ++i) pos[i] = (pat >> (i - 1)) & 1u;

    // pattern-frozen evaluation
    auto frozen_eval = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& load, TriDiag& Mact) {
      load = Eigen::VectorXd::Zero(n - 1);
      Mact.diag = Eigen::VectorXd::Zero(n - 1);
      Mact.off = Eigen::VectorXd::Zero(std::max(0, n - 2));
      Eigen::VectorXd u = S * zz;
      P1Function uf(op.mesh_ptr(), u);
      Eigen::VectorXd w = penalty_argument(uf, mu, gamma, cfg.u_b);
      for (int k = 0; k < n; ++k) {
        auto c = oracle_detail::frozen_cell(w[k], w[k + 1], h[k], pos[k], pos[k + 1]);
        if (k >= 1) {
          load[k - 1] += c.load_left;
          Mact.diag[k - 1] += c.m_ll;
        }
        if (k + 1 <= n - 1) {
          load[k] += c.load_right;
          Mact.diag[k] += c.m_rr;
        }
        if (k >= 1 && k + 1 <= n - 1) Mact.off[k - 1] += c.m_lr;
      }
      return std::pair{u, w};
    };

    // damped Newton on the pattern-frozen (smooth) first-order system, with
    // a residual-norm line search; tried from the cycle iterate, then cold
    auto frozen_solve = [&](Eigen::VectorXd zz, Eigen::VectorXd& out) {
      auto residual = [&](const Eigen::VectorXd& zc, Eigen::VectorXd& xi, Eigen::VectorXd& g,
                          TriDiag& Mact) {
        Eigen::VectorXd load;
        auto uw = frozen_eval(zc, load, Mact);
        P1Function uf(op.mesh_ptr(), uw.first);
        xi = lu.solve(Eigen::VectorXd(mass_apply_full(mesh, uf.full_nodal() - ud) + load));
        g = cfg.alpha * zc + (Bd.transpose() * xi).cwiseQuotient(h);
        return znorm(zc - project(zc - g));
      };
      Eigen::VectorXd xi, g;
      TriDiag Mact;
      double res = residual(zz, xi, g, Mact);
      for (int it = 0; it < 80; ++it) {
        if (res <= 10.0 * tol * (1.0 + znorm(zz))) {
          out = zz;
          return true;
        }
        if (!std::isfinite(res)) return false;
        TriDiag T = assemble_mass_p1(mesh);
        T.axpy(gamma, Mact);
        State pseudo;
        pseudo.xi = xi;
        pseudo.g = g;
        const Eigen::VectorXd dir = newton_step(zz, pseudo, T) - zz;
        double t = 1.0;
        bool stepped = false;
        while (t > 1e-12) {
          Eigen::VectorXd zt = zz + t * dir;
          Eigen::VectorXd xit, gt;
          TriDiag Mt;
          const double rest = residual(zt, xit, gt, Mt);
          if (std::isfinite(rest) && rest <= (1.0 - 1e-4 * t) * res) {
            zz = std::move(zt);
            xi = std::move(xit);
            g = std::move(gt);
            Mact = std::move(Mt);
            res = rest;
            stepped = true;
            break;
          }
          t *= 0.5;
        }
        if (!stepped) return false;
      }
      return false;
    };
    Eigen::VectorXd zz;
    bool ok = frozen_solve(z_cycle, zz) || frozen_solve(project(z0.values), zz);
    if (!ok) continue;
    // consistency: the converged iterate must reproduce the assumed signs
    State cand = eval(zz);
    bool consistent = true;
    const double wscale = 1e-11 * (1.0 + cand.w.cwiseAbs().maxCoeff());
    for (int i = 0; i <= n; ++i) {
      if (cand.w[i] > wscale && !pos[i]) consistent = false;
      if (cand.w[i] < -wscale && pos[i]) consistent = false;
    }
    if (!consistent) continue;
    if (cand.kkt > 1e3 * tol * (1.0 + znorm(zz))) continue;
    if (cand.Jgamma < best_J) {
      best_J = cand.Jgamma;
      best_z = zz;
      best_st = cand;
      found = true;
    }
  }
  if (!found)
    throw std::runtime_error("semismooth_newton_oracle: enumeration found no consistent pattern");
  return make_solution(best_z, best_st, iters, true);
}

}  // namespace fracocp
