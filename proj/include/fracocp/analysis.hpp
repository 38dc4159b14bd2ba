#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fracocp/assembly.hpp"
#include "fracocp/mesh.hpp"
#include "fracocp/pde.hpp"
#include "fracocp/quadrature.hpp"

// Independent oracles and convergence diagnostics: closed-form solutions,
// the adaptive-quadrature assembly oracle, norms, and log-log rate fitting.

namespace fracocp {

/// Coefficient of the closed-form solution of (-Delta)^s u = 1 on a ball of
/// radius r: u = c(s) (r^2 - |x|^2)_+^s.  dim = 1 gives
/// c = Gamma(1/2) / (4^s Gamma(1+s) Gamma(s+1/2)); dim = 2 gives the
/// rotationally symmetric analogue 4^{-s} / Gamma(1+s)^2.
inline double getoor_coefficient(double s, int dim = 1) {
  if (!(s > 0.0 && s < 1.0))
    throw std::invalid_argument("getoor_coefficient: s must lie in (0,1)");
  if (dim == 1)
    return std::tgamma(0.5) / (std::pow(2.0, 2.0 * s) * std::tgamma(1.0 + s) * std::tgamma(s + 0.5));
  if (dim == 2) return std::pow(2.0, -2.0 * s) / (std::tgamma(1.0 + s) * std::tgamma(1.0 + s));
  throw std::invalid_argument("getoor_coefficient: dim must be 1 or 2");
}

/// 1D bump profile c(s) (r^2 - x^2)_+^s solving (-Delta)^s u = 1 on (-r, r)
/// (x measured from the center of the ball).
inline double getoor_profile(double s, double x, double radius) {
  const double t = radius * radius - x * x;
  if (t <= 0.0) return 0.0;
  return getoor_coefficient(s, 1) * std::pow(t, s);
}

/// Pointwise fractional Laplacian of a scalar function vanishing outside
/// (lo, hi), by adaptive quadrature of the principal-value integral.  The
/// symmetric difference 2f(x) - f(x+t) - f(x-t) tames the singularity; f
/// must be C^2 near x.
template <class F>
double frac_laplacian_pointwise(const F& f, double x, double s, double lo, double hi,
                                double tol = 1e-9) {
  if (!(x > lo && x < hi))
    throw std::domain_error("frac_laplacian_pointwise: x must be interior");
  const double c = normalization_constant(s);
  const double delta = 0.25 * std::min(x - lo, hi - x);
  const double fx = f(x);
  // symmetric core around x
  auto core = [&](double t) {
    return (2.0 * fx - f(x + t) - f(x - t)) * std::pow(t, -1.0 - 2.0 * s);
  };
  // the symmetric integrand is O(t^{1-2s}) at 0; substitute t = v^q
  const int q = std::max(2, static_cast<int>(std::ceil(1.5 / (2.0 - 2.0 * s))));
  auto core_sub = [&](double v) {
    const double t = std::pow(v, q);
    return core(t) * q * std::pow(v, q - 1);
  };
  double acc = quad::integrate_strict(core_sub, 0.0, std::pow(delta, 1.0 / q), tol, 44);
  // outer parts, f extended by zero beyond (lo, hi); split at the support
  // edges where f has kinks, and integrate the far tails exactly
  auto piece = [&](double a2, double b2) {
    if (!(b2 > a2)) return 0.0;
    auto g = [&](double y) {
      return (fx - f(y)) * std::pow(std::abs(x - y), -1.0 - 2.0 * s);
    };
    return quad::integrate_strict(g, a2, b2, tol, 44);
  };
  acc += piece(lo, x - delta) + piece(x + delta, hi);
  // tails: f = 0, integral of fx * |x-y|^{-1-2s} beyond the support
  acc += fx / (2.0 * s) * (std::pow(x - lo, -2.0 * s) + std::pow(hi - x, -2.0 * s));
  return c * acc;
}

namespace detail {

inline double hat_value(const Mesh& mesh, int idx, double x) {
  const double xl = mesh.node(idx - 1), xc = mesh.node(idx), xr = mesh.node(idx + 1);
  if (x <= xl || x >= xr) return 0.0;
  return (x < xc) ? (x - xl) / (xc - xl) : (xr - x) / (xr - xc);
}

// Vector-valued adaptive Gauss (componentwise max-norm error control): all
// hat combinations of a cell pair share one kernel sweep.
template <int N, class F>
void vec_adapt(const F& f, double a, double b, const std::array<double, N>& whole, double tol,
               int depth, std::array<double, N>& acc) {
  const double m = 0.5 * (a + b);
  std::array<double, N> left{}, right{};
  const double cl = 0.5 * (a + m), hl = 0.5 * (m - a);
  const double cr = 0.5 * (m + b), hr = 0.5 * (b - m);
  for (int i = 0; i < quad::kG15; ++i) {
    auto vl = f(cl + hl * quad::kG15Nodes[i]);
    auto vr = f(cr + hr * quad::kG15Nodes[i]);
    for (int c = 0; c < N; ++c) {
      left[c] += quad::kG15Weights[i] * vl[c] * hl;
      right[c] += quad::kG15Weights[i] * vr[c] * hr;
    }
  }
  double err = 0.0, mag = 0.0;
  for (int c = 0; c < N; ++c) {
    err = std::max(err, std::abs(whole[c] - left[c] - right[c]));
    mag = std::max(mag, std::abs(left[c]) + std::abs(right[c]));
  }
  const double floor_tol = 64.0 * std::numeric_limits<double>::epsilon() * mag;
  if (err <= std::max(tol, floor_tol) || depth <= 0) {
    for (int c = 0; c < N; ++c) acc[c] += left[c] + right[c];
    return;
  }
  vec_adapt<N>(f, a, m, left, 0.5 * tol, depth - 1, acc);
  vec_adapt<N>(f, m, b, right, 0.5 * tol, depth - 1, acc);
}

template <int N, class F>
std::array<double, N> vec_integrate(const F& f, double a, double b, double tol, int depth) {
  std::array<double, N> whole{}, acc{};
  if (!(b > a)) return acc;
  const double c0 = 0.5 * (a + b), h0 = 0.5 * (b - a);
  for (int i = 0; i < quad::kG15; ++i) {
    auto v = f(c0 + h0 * quad::kG15Nodes[i]);
    for (int c = 0; c < N; ++c) whole[c] += quad::kG15Weights[i] * v[c] * h0;
  }
  vec_adapt<N>(f, a, b, whole, tol, depth, acc);
  return acc;
}

// Local contribution block of one ordered cell pair T_k x T_l: the hats
// meeting the pair and the integrals of (phi_t(x)-phi_t(y))(phi_u(x)-phi_u(y)) K
// for all their combinations.  Strategies by pair type (all quadrature-based;
// no shared code with the assembler's antiderivatives):
//   same cell  - the hat differences are exact multiples of (x - y), so the
//                pair integral reduces to a 1D radial integral of
//                (h - z) z^{1-2s}, integrated adaptively after a power
//                substitution smoothing the endpoint;
//   adjacent   - hat differences are linear forms in the distances to the
//                shared node; on each diagonal fiber x + z = y the inner
//                integral is a quadratic polynomial (2-point Gauss exact),
//                leaving a 1D adaptive integral in z with the corner
//                singularity smoothed the same way;
//   separated  - smooth integrand, iterated adaptive Gauss.
struct OracleBlock {
  int nodes[4];
  int count = 0;
  std::array<double, 10> val{};  // upper-triangular combos in node order
};

inline OracleBlock oracle_pair_block(const Mesh& mesh, double s, int k, int l, double tol) {
  OracleBlock blk;
  const int n = mesh.cells();
  int cand[4] = {k, k + 1, l, l + 1};
  for (int g : cand) {
    if (g < 1 || g > n - 1) continue;
    bool dup = false;
    for (int t = 0; t < blk.count; ++t) dup = dup || (blk.nodes[t] == g);
    if (!dup) blk.nodes[blk.count++] = g;
  }
  if (blk.count == 0) return blk;
  const int ng = blk.count;

  if (k == l) {
    // phi_t(x) - phi_t(y) = slope_t (x - y) on the cell
    const double h = mesh.width(k);
    double slope[4];
    for (int t = 0; t < ng; ++t)
      slope[t] = (blk.nodes[t] == k) ? -1.0 / h : 1.0 / h;
    const int q = std::max(1, static_cast<int>(std::ceil(2.0 / (2.0 - 2.0 * s))));
    auto g1 = [&](double t) {
      const double z = std::pow(t, q);
      return (h - z) * std::pow(z, 1.0 - 2.0 * s) * q * std::pow(t, q - 1);
    };
    // R = int int over the cell of |x-y|^{1-2s} = 2 int_0^h (h-z) z^{1-2s} dz
    const double R = 2.0 * quad::integrate(g1, 0.0, std::pow(h, 1.0 / q), tol * h, 40).value;
    int c = 0;
    for (int t = 0; t < ng; ++t)
      for (int u = t; u < ng; ++u) blk.val[c++] = slope[t] * slope[u] * R;
    return blk;
  }

  if (l == k + 1) {
    // distances to the shared node: u = c - x in [0,A], v = y - c in [0,B];
    // phi_t(x) - phi_t(y) = -(p_t u + q_t v)
    const double c0 = mesh.node(k + 1);
    const double A = mesh.width(k), B = mesh.width(l);
    double pc[4], qc[4];
    for (int t = 0; t < ng; ++t) {
      const int g = blk.nodes[t];
      pc[t] = (g == k) ? -1.0 / A : (g == k + 1 ? 1.0 / A : 0.0);
      qc[t] = (g == k + 1) ? -1.0 / B : (g == k + 2 ? 1.0 / B : 0.0);
    }
    (void)c0;
    const int ncomb = ng * (ng + 1) / 2;
    // inner fiber integral over u in [max(0,z-B), min(A,z)] of the quadratic
    // (p u + q v)(p' u + q' v), v = z - u; 2-point Gauss is exact
    auto fiber = [&](double z) {
      std::array<double, 10> out{};
      const double u0 = std::max(0.0, z - B), u1 = std::min(A, z);
      if (!(u1 > u0)) return out;
      static constexpr double gp = 0.5773502691896257645091488;
      const double mid = 0.5 * (u0 + u1), half = 0.5 * (u1 - u0);
      const double kz = std::pow(z, -1.0 - 2.0 * s);
      for (double ug : {mid - half * gp, mid + half * gp}) {
        const double vg = z - ug;
        int c = 0;
        for (int t = 0; t < ng; ++t)
          for (int u = t; u < ng; ++u)
            out[c++] += half * (pc[t] * ug + qc[t] * vg) * (pc[u] * ug + qc[u] * vg) * kz;
      }
      return out;
    };
    const double zmin = std::min(A, B), zmax = std::max(A, B);
    const int q = std::max(1, static_cast<int>(std::ceil(2.0 / (3.0 - 2.0 * s))));
    auto near_corner = [&](double t) {
      const double z = std::pow(t, q);
      auto r = fiber(z);
      const double jac = q * std::pow(t, q - 1);
      for (auto& e : r) e *= jac;
      return r;
    };
    auto acc1 = vec_integrate<10>(near_corner, 0.0, std::pow(zmin, 1.0 / q), tol, 40);
    auto acc2 = vec_integrate<10>(fiber, zmin, zmax, tol, 40);
    auto acc3 = vec_integrate<10>(fiber, zmax, A + B, tol, 40);
    for (int c = 0; c < ncomb; ++c) blk.val[c] = acc1[c] + acc2[c] + acc3[c];
    return blk;
  }

  // separated pair: smooth, iterated adaptive on the raw combinations
  const double xa = mesh.node(k), xb = mesh.node(k + 1);
  const double ya = mesh.node(l), yb = mesh.node(l + 1);
  auto combos_at = [&](double x, double y) {
    std::array<double, 10> out{};
    double d[4];
    for (int t = 0; t < ng; ++t)
      d[t] = hat_value(mesh, blk.nodes[t], x) - hat_value(mesh, blk.nodes[t], y);
    const double K = std::pow(std::abs(x - y), -1.0 - 2.0 * s);
    int c = 0;
    for (int t = 0; t < ng; ++t)
      for (int u = t; u < ng; ++u) out[c++] = d[t] * d[u] * K;
    return out;
  };
  const double inner_tol = 0.25 * tol / (xb - xa);
  auto outer = [&](double x) {
    auto g = [&](double y) { return combos_at(x, y); };
    return vec_integrate<10>(g, ya, yb, inner_tol, 32);
  };
  auto acc = vec_integrate<10>(outer, xa, xb, tol, 32);
  for (int c = 0; c < ng * (ng + 1) / 2; ++c) blk.val[c] = acc[c];
  return blk;
}

}  // namespace detail

/// Independent evaluation of E(phi_i, phi_j) (1-based interior node indices)
/// by adaptive composite Gauss quadrature on the double integral plus the
/// exterior-weight term; integration strategy disjoint from the assembler's
/// closed forms.  Declared accuracy ~1e-10 relative.
inline double quadrature_oracle_entry(const Mesh& mesh, double s, int i, int j) {
  const int n = mesh.cells();
  if (i < 1 || i > n - 1 || j < 1 || j > n - 1)
    throw std::invalid_argument("quadrature_oracle_entry: index out of range");
  const double C = normalization_constant(s);
  const double scale = std::max(std::pow(mesh.max_width(), 1.0 - 2.0 * s), 1e-6);
  double dbl = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      const bool rel = ((k == i - 1 || k == i || l == i - 1 || l == i) &&
                        (k == j - 1 || k == j || l == j - 1 || l == j));
      if (!rel) continue;
      const auto blk = detail::oracle_pair_block(mesh, s, k, l, 1e-12 * scale);
      int pi = -1, pj = -1;
      for (int t = 0; t < blk.count; ++t) {
        if (blk.nodes[t] == i) pi = t;
        if (blk.nodes[t] == j) pj = t;
      }
      if (pi < 0 || pj < 0) continue;
      const int t = std::min(pi, pj), u = std::max(pi, pj);
      int c = 0;
      double v = 0.0;
      for (int a = 0; a < blk.count; ++a)
        for (int b = a; b < blk.count; ++b, ++c)
          if (a == t && b == u) v = blk.val[c];
      dbl += (k == l) ? v : 2.0 * v;  // integrand symmetric under (x,y) swap
    }
  }
  double kap = 0.0;
  if (std::abs(i - j) <= 1) {
    auto g = [&](double x) {
      return detail::hat_value(mesh, i, x) * detail::hat_value(mesh, j, x) * kappa(mesh, s, x);
    };
    const int klo = std::max(i, j) - 1, khi = std::min(i, j);
    for (int k = klo; k <= khi; ++k)
      kap += quad::integrate_strict(g, mesh.node(k), mesh.node(k + 1), 1e-13 * scale, 44);
  }
  return 0.5 * C * dbl + kap;
}

inline const char* oracle_method() { return "adaptive-gauss-quadrature"; }

/// Full oracle matrix: standard cell-pair assembly over the shared local
/// blocks.  Same strategy and accuracy as quadrature_oracle_entry, batched.
inline Eigen::MatrixXd quadrature_oracle_matrix(const Mesh& mesh, double s) {
  const int n = mesh.cells();
  const double C = normalization_constant(s);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n - 1, n - 1);
  const double scale = std::max(std::pow(mesh.max_width(), 1.0 - 2.0 * s), 1e-6);
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      const auto blk = detail::oracle_pair_block(mesh, s, k, l, 1e-12 * scale);
      const double mult = (k == l) ? 1.0 : 2.0;
      int c = 0;
      for (int t = 0; t < blk.count; ++t)
        for (int u = t; u < blk.count; ++u, ++c) {
          E(blk.nodes[t] - 1, blk.nodes[u] - 1) += mult * blk.val[c];
          if (t != u) E(blk.nodes[u] - 1, blk.nodes[t] - 1) += mult * blk.val[c];
        }
    }
  }
  E *= 0.5 * C;
  for (int i = 1; i <= n - 1; ++i) {
    for (int j = i; j <= std::min(n - 1, i + 1); ++j) {
      auto g = [&](double x) {
        return detail::hat_value(mesh, i, x) * detail::hat_value(mesh, j, x) *
               kappa(mesh, s, x);
      };
      double kap = 0.0;
      const int klo = std::max(i, j) - 1, khi = std::min(i, j);
      for (int k = klo; k <= khi; ++k)
        kap += quad::integrate_strict(g, mesh.node(k), mesh.node(k + 1), 1e-13 * scale, 44);
      E(i - 1, j - 1) += kap;
      if (i != j) E(j - 1, i - 1) += kap;
    }
  }
  return E;
}

// ---------------------------------------------------------------------------
// Norms and errors

inline double l2_norm(const P1Function& f) { return std::sqrt(l2sq_full(*f.mesh, f.full_nodal())); }
inline double l2_norm(const P0Function& f) { return f.l2_norm(); }

template <class Fn>
void require_same_mesh(const Fn& f, const Fn& g) {
  if (f.mesh->cells() != g.mesh->cells() || f.mesh->a() != g.mesh->a() ||
      f.mesh->b() != g.mesh->b())
    throw std::invalid_argument("mismatched meshes");
}

inline double l2_error(const P1Function& f, const P1Function& g) {
  require_same_mesh(f, g);
  return std::sqrt(l2sq_full(*f.mesh, f.full_nodal() - g.full_nodal()));
}
inline double l2_error(const P0Function& f, const P0Function& g) {
  require_same_mesh(f, g);
  P0Function d(f.mesh, f.values - g.values);
  return d.l2_norm();
}

/// Energy norm sqrt(u^T A u) induced by the fractional stiffness matrix.
inline double energy_norm(const FracOperator& op, const P1Function& u) {
  if (u.values.size() != op.stiffness().rows())
    throw std::invalid_argument("energy_norm: dimension mismatch");
  return std::sqrt(u.values.dot(op.stiffness() * u.values));
}

struct ViolationNorms {
  double l2 = 0.0;   // ||(u - u_b)+||_L2, exact
  double sup = 0.0;  // max over the closure of (u - u_b)+
};

/// Constraint-violation norms of a P1 state against a constant bound; the
/// maximum of a piecewise-linear function is attained at a node.
inline ViolationNorms violation_norms(const P1Function& u, double u_b) {
  const Mesh& mesh = *u.mesh;
  const int n = mesh.cells();
  Eigen::VectorXd w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = u.nodal(i) - u_b;
  ViolationNorms out;
  out.l2 = positive_part_l2norm(mesh, w);
  out.sup = std::max(0.0, w.maxCoeff());
  return out;
}

/// Exact-quadrature L2 distance between a P1 function and a callable
/// reference (adaptive per cell down to the roundoff floor; used against
/// closed-form solutions whose boundary behavior is only Holder).
template <class F>
double l2_error_vs_function(const P1Function& u, const F& ref, double cell_tol = 1e-17) {
  const Mesh& mesh = *u.mesh;
  double acc = 0.0;
  for (int k = 0; k < mesh.cells(); ++k) {
    auto g = [&](double x) {
      const double d = u(x) - ref(x);
      return d * d;
    };
    acc += quad::integrate(g, mesh.node(k), mesh.node(k + 1), cell_tol, 44).value;
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Rate fitting

/// Least-squares slope on log-log data with an optional floor-detection
/// window (drops trailing points whose local slope has collapsed).
struct RateFit {
  std::vector<double> xs, errs;  // the fitted window
  double slope = 0.0;
  double residual = 0.0;  // rms of log-space residuals
  int first = 0, count = 0;
};

enum class FitWindow { All, DropFloor };

inline RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& errs,
                        FitWindow window = FitWindow::All) {
  if (xs.size() != errs.size()) throw std::invalid_argument("fit_rate: size mismatch");
  const int n = static_cast<int>(xs.size());
  for (int i = 0; i < n; ++i)
    if (!(xs[i] > 0.0) || !(errs[i] > 0.0))
      throw std::invalid_argument("fit_rate: data must be positive");
  for (int i = 0; i + 1 < n; ++i)
    if (!(xs[i] < xs[i + 1]) && !(xs[i] > xs[i + 1]))
      throw std::invalid_argument("fit_rate: abscissae must be strictly monotone");

  int count = n;
  if (window == FitWindow::DropFloor && n >= 4) {
    std::vector<double> local(n - 1);
    for (int i = 0; i + 1 < n; ++i)
      local[i] = (std::log(errs[i + 1]) - std::log(errs[i])) /
                 (std::log(xs[i + 1]) - std::log(xs[i]));
    std::vector<double> mags(local.size());
    for (size_t i = 0; i < local.size(); ++i) mags[i] = std::abs(local[i]);
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    while (count > 3 && mags[count - 2] < 0.5 * median) --count;
  }
  if (count < 3) throw std::runtime_error("fit_rate: fewer than 3 usable points");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < count; ++i) {
    const double lx = std::log(xs[i]), ly = std::log(errs[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  RateFit fit;
  fit.first = 0;
  fit.count = count;
  fit.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  const double intercept = (sy - fit.slope * sx) / count;
  double rss = 0.0;
  for (int i = 0; i < count; ++i) {
    const double r = std::log(errs[i]) - (intercept + fit.slope * std::log(xs[i]));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / count);
  fit.xs.assign(xs.begin(), xs.begin() + count);
  fit.errs.assign(errs.begin(), errs.begin() + count);
  return fit;
}

}  // namespace fracocp
