#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "fracocp/mesh.hpp"

// Discrete bilinear form of the integral fractional Laplacian on (a, b) with
// zero exterior extension, plus the standard P1 mass and P1xP0 coupling
// matrices.
//
// With kernel K(d) = |d|^(-1-2s) and hats extended by zero to all of R, the
// energy of two mesh functions reduces, after writing u(x) - u(y) as the
// integral of u' over (y, x), to a cell-pair quadratic form in the piecewise
// constant derivatives:
//
//   E(u, v) = -(C_{1,s}/2) * sum_{i,j} c_i c_j Phi(x_i - x_j)
//
// where Phi'''' = 2 K away from 0 and the c's are second-divided-difference
// stencils of the nodal values.  Phi is known in closed form, the exterior
// contribution is contained in it exactly, and the formula holds for every
// entry.  It is numerically safe only for nearby supports, so far-apart
// entries are instead computed from the cross-product form
//   A_ij = -C_{1,s} * int int phi_i(x) phi_j(y) K(x - y),
// whose element-pair integrals have closed forms built from moments of the
// kernel against polynomials.  Both routes are exact; they are cross-checked
// against an independent adaptive-quadrature oracle in the test suite.

namespace fracocp {

/// C_{1,s} = s 4^s Gamma((2s+1)/2) / (sqrt(pi) Gamma(1-s)).
inline double normalization_constant(double s) {
  if (!(s > 0.0 && s < 1.0))
    throw std::invalid_argument("normalization_constant: s must lie in (0,1)");
  return s * std::pow(2.0, 2.0 * s) * std::tgamma(s + 0.5) /
         (std::sqrt(M_PI) * std::tgamma(1.0 - s));
}

/// Exterior weight kappa(x) = (C_{1,s}/(2s)) [(x-a)^{-2s} + (b-x)^{-2s}],
/// the exact contribution of R \ (a,b) to the energy of functions vanishing
/// outside the interval.  Diverges toward either endpoint.
inline double kappa(const Mesh& mesh, double s, double x) {
  if (!(x > mesh.a() && x < mesh.b()))
    throw std::domain_error("kappa: x must be strictly inside the domain");
  const double c = normalization_constant(s) / (2.0 * s);
  return c * (std::pow(x - mesh.a(), -2.0 * s) + std::pow(mesh.b() - x, -2.0 * s));
}

namespace detail {

// Values of s within 1e-13 of 1/2 are treated as exactly 1/2 so that the
// logarithm branches below are selected by exact comparisons.
inline double snap_half(double s) {
  return (std::abs(2.0 * s - 1.0) <= 1e-13) ? 0.5 : s;
}

// expm1(e*L)/e, continuous through e == 0 where it equals L.
inline double em1_over(double e, double L) {
  if (e == 0.0) return L;
  return std::expm1(e * L) / e;
}

// int_lo^hi w^beta dw for 0 <= lo < hi.  Exact log branch at beta == -1;
// the expm1 form keeps nearby exponents fully accurate.
inline double power_integral(double beta, double lo, double hi) {
  const double e = beta + 1.0;
  if (lo == 0.0) {
    if (!(e > 0.0))
      throw std::logic_error("power_integral: divergent at the lower endpoint");
    return std::pow(hi, e) / e;
  }
  if (std::abs(e) < 0.25)
    return em1_over(e, std::log(hi)) - em1_over(e, std::log(lo));
  return (std::pow(hi, e) - std::pow(lo, e)) / e;
}

// int_lo^hi w^k log(w) dw for integer k >= 0 (limit 0 at w = 0).
inline double log_power_integral(int k, double lo, double hi) {
  auto F = [k](double w) {
    if (w == 0.0) return 0.0;
    const double k1 = k + 1.0;
    return std::pow(w, k1) * (std::log(w) / k1 - 1.0 / (k1 * k1));
  };
  return F(hi) - F(lo);
}

inline double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;  // 0^0 == 1 by convention
}

inline int binom(int n, int k) {
  static const int table[3][3] = {{1, 0, 0}, {1, 1, 0}, {1, 2, 1}};
  return table[n][k];
}

// J(a,b; A,B,g) = int_0^A int_0^B u^a v^b (u + v + g)^(-1-2s) dv du,
// closed form via binomial expansion around the shifted kernel argument.
// Requires g > 0, or a+b >= 2 when the rectangles touch (g == 0).
inline double kernel_poly_moment(int a, int b, double A, double B, double g, double s) {
  if (g == 0.0 && a + b < 2)
    throw std::logic_error("kernel_poly_moment: divergent touching moment requested");
  const double sigma0 = -1.0 - 2.0 * s;
  double total = 0.0;
  for (int j = 0; j <= b; ++j) {
    const int mu = b - j;  // power of (u+g) carried to the outer integral
    const double beta = sigma0 + j;
    double Tj;
    if (beta == -1.0) {
      // inner integral is log((u+g+B)/(u+g)); only reached at s == 1/2, j == 1
      double p1 = 0.0;
      for (int i1 = 0; i1 <= a; ++i1)
        for (int i2 = 0; i2 <= mu; ++i2)
          p1 += binom(a, i1) * binom(mu, i2) * ipow(-(g + B), a - i1) * ipow(-B, mu - i2) *
                log_power_integral(i1 + i2, g + B, g + A + B);
      double p2 = 0.0;
      for (int i1 = 0; i1 <= a; ++i1)
        p2 += binom(a, i1) * ipow(-g, a - i1) * log_power_integral(mu + i1, g, g + A);
      Tj = p1 - p2;
    } else {
      const double ej = beta + 1.0;  // = j - 2s
      double hi = 0.0;
      for (int i1 = 0; i1 <= a; ++i1)
        for (int i2 = 0; i2 <= mu; ++i2)
          hi += binom(a, i1) * binom(mu, i2) * ipow(-(g + B), a - i1) * ipow(-B, mu - i2) *
                power_integral(ej + i1 + i2, g + B, g + A + B);
      double lo = 0.0;
      if (g == 0.0) {
        lo = power_integral(ej + mu + a, 0.0, A);
      } else {
        for (int i1 = 0; i1 <= a; ++i1)
          lo += binom(a, i1) * ipow(-g, a - i1) * power_integral(ej + mu + i1, g, g + A);
      }
      Tj = (hi - lo) / ej;
    }
    total += binom(b, j) * (((b - j) % 2 == 0) ? 1.0 : -1.0) * Tj;
  }
  return total;
}

// Double antiderivative of the t-tau kernel appearing in the derivative-based
// form of the energy: Phi''(d) = d^(1-2s) / (s(2s-1)) up to an additive
// quadratic, which the divided-difference stencils annihilate exactly.  The
// expm1 form keeps the value finite and accurate through s -> 1/2.
inline double phi_antideriv(double s, double d) {
  d = std::abs(d);
  if (d == 0.0) return 0.0;
  if (s == 0.5) return -d * d * std::log(d);
  const double pole = 1.0 / (s * (2.0 * s - 1.0) * (2.0 - 2.0 * s) * (3.0 - 2.0 * s));
  return d * d * std::expm1((1.0 - 2.0 * s) * std::log(d)) * pole;
}

// A_ij through the divided-difference stencil; exact for every pair but used
// only for |i-j| <= 2 where no deep cancellation occurs.
inline double stiffness_near_entry(const Mesh& mesh, double c_ns, double s, int i, int j) {
  double wi[3], wj[3];
  const double hi0 = mesh.width(i - 1), hi1 = mesh.width(i);
  const double hj0 = mesh.width(j - 1), hj1 = mesh.width(j);
  wi[0] = 1.0 / hi0; wi[1] = -(1.0 / hi0 + 1.0 / hi1); wi[2] = 1.0 / hi1;
  wj[0] = 1.0 / hj0; wj[1] = -(1.0 / hj0 + 1.0 / hj1); wj[2] = 1.0 / hj1;
  double sum = 0.0;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q)
      sum += wi[p] * wj[q] * phi_antideriv(s, mesh.node(i - 1 + p) - mesh.node(j - 1 + q));
  return -0.5 * c_ns * sum;
}

// A_ij for disjoint supports (j >= i+3): the energy reduces to
// -C int int phi_i(x) phi_j(y) K, a sum of four well-separated cell-pair
// integrals with linear weights.
inline double stiffness_far_entry(const Mesh& mesh, double c_ns, double s, int i, int j) {
  double total = 0.0;
  for (int k = i - 1; k <= i; ++k) {
    for (int l = j - 1; l <= j; ++l) {
      const double A = mesh.width(k), B = mesh.width(l);
      const double g = mesh.node(l) - mesh.node(k + 1);
      // phi_i on T_k in u = x_{k+1} - x: ascending hat is 1 - u/A, descending u/A
      const double p0 = (i == k + 1) ? 1.0 : 0.0;
      const double p1 = (i == k + 1) ? -1.0 : 1.0;
      // phi_j on T_l in v = y - x_l
      const double q0 = (j == l) ? 1.0 : 0.0;
      const double q1 = (j == l) ? -1.0 : 1.0;
      double cp = 0.0;
      if (p0 * q0 != 0.0) cp += p0 * q0 * kernel_poly_moment(0, 0, A, B, g, s);
      if (p0 * q1 != 0.0) cp += p0 * q1 * kernel_poly_moment(0, 1, A, B, g, s) / B;
      if (p1 * q0 != 0.0) cp += p1 * q0 * kernel_poly_moment(1, 0, A, B, g, s) / A;
      if (p1 * q1 != 0.0) cp += p1 * q1 * kernel_poly_moment(1, 1, A, B, g, s) / (A * B);
      total += cp;
    }
  }
  return -c_ns * total;
}

}  // namespace detail

/// Raw kernel moment I_m = int int (x-y)^m |x-y|^(-1-2s) over a rectangle
/// x_range x y_range.  Exact antiderivative evaluation with logarithm
/// branches; odd moments over identical ranges vanish by antisymmetry.
/// Divergent requests (which the assembler never makes) throw.
inline double kernel_moment(double x0, double x1, double y0, double y1, int m, double s) {
  if (!(x0 < x1) || !(y0 < y1))
    throw std::invalid_argument("kernel_moment: empty range");
  if (m < 0 || m > 2) throw std::invalid_argument("kernel_moment: m must be 0, 1, or 2");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("kernel_moment: s must lie in (0,1)");
  s = detail::snap_half(s);

  // ordered rectangle [p,q] x [r,t], q <= r, integrand (far - near)^(m-1-2s)
  auto raw_ordered = [m, s](double p, double q, double r, double t) {
    const double E1 = m - 2.0 * s, E2 = m + 1.0 - 2.0 * s;
    const double d[4] = {t - p, t - q, r - p, r - q};
    const double sign[4] = {1.0, -1.0, -1.0, 1.0};
    const bool touching = (d[3] == 0.0);
    if (touching && !(E2 > 0.0))
      throw std::runtime_error("kernel_moment: divergent raw moment over touching ranges");
    double acc = 0.0;
    if (E1 == 0.0) {  // m == 1, s == 1/2
      for (int c = 0; c < 4; ++c)
        if (d[c] > 0.0) acc += sign[c] * (d[c] * std::log(d[c]) - d[c]) / E2;
    } else if (E2 == 0.0) {  // m == 0, s == 1/2, disjoint only
      for (int c = 0; c < 4; ++c) acc += sign[c] * (-std::log(d[c]));
    } else if (std::abs(E1) < 0.25) {
      for (int c = 0; c < 4; ++c)
        if (d[c] > 0.0) acc += sign[c] * d[c] * detail::em1_over(E1, std::log(d[c])) / E2;
    } else if (std::abs(E2) < 0.25) {
      for (int c = 0; c < 4; ++c)
        acc += sign[c] * ((d[c] > 0.0) ? detail::em1_over(E2, std::log(d[c])) : -1.0 / E2) / E1;
    } else {
      for (int c = 0; c < 4; ++c)
        if (d[c] > 0.0) acc += sign[c] * std::pow(d[c], E2) / (E1 * E2);
    }
    return acc;
  };

  // split both axes at interior breakpoints so every sub-rectangle is
  // cleanly ordered or identical
  auto segments = [](double lo, double hi, double c0, double c1) {
    double pts[4] = {lo, hi, hi, hi};
    int np = 2;
    if (c0 > lo && c0 < hi) pts[np++] = c0;
    if (c1 > lo && c1 < hi) pts[np++] = c1;
    std::sort(pts, pts + np);
    return std::pair<std::array<double, 4>, int>({pts[0], pts[1], pts[2], pts[3]}, np);
  };
  auto [xs, nx] = segments(x0, x1, y0, y1);
  auto [ys, ny] = segments(y0, y1, x0, x1);

  double total = 0.0;
  for (int ix = 0; ix + 1 < nx; ++ix) {
    for (int iy = 0; iy + 1 < ny; ++iy) {
      const double xa = xs[ix], xb = xs[ix + 1], ya = ys[iy], yb = ys[iy + 1];
      if (xb <= ya) {  // x < y throughout: (x-y)^m = (-1)^m (y-x)^m
        total += ((m % 2 == 0) ? 1.0 : -1.0) * raw_ordered(xa, xb, ya, yb);
      } else if (yb <= xa) {  // y < x throughout
        total += raw_ordered(ya, yb, xa, xb);
      } else if (xa == ya && xb == yb) {
        if (m % 2 == 1) continue;  // antisymmetry: symmetric value 0
        const double E1 = m - 2.0 * s, E2 = m + 1.0 - 2.0 * s;
        if (!(E1 > 0.0))
          throw std::runtime_error("kernel_moment: divergent moment across the diagonal");
        total += 2.0 * std::pow(xb - xa, E2) / (E1 * E2);
      } else {
        throw std::logic_error("kernel_moment: partition failure");
      }
    }
  }
  return total;
}

/// Tridiagonal symmetric matrix over the interior P1 nodes.
struct TriDiag {
  Eigen::VectorXd diag;  // size n-1
  Eigen::VectorXd off;   // size n-2, off[i] couples node i+1 and i+2

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const Eigen::Index n = diag.size();
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = diag[i] * v[i];
      if (i > 0) acc += off[i - 1] * v[i - 1];
      if (i + 1 < n) acc += off[i] * v[i + 1];
      r[i] = acc;
    }
    return r;
  }

  Eigen::MatrixXd apply_dense(const Eigen::MatrixXd& V) const {
    const Eigen::Index n = diag.size();
    Eigen::MatrixXd R(n, V.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      R.row(i) = diag[i] * V.row(i);
      if (i > 0) R.row(i) += off[i - 1] * V.row(i - 1);
      if (i + 1 < n) R.row(i) += off[i] * V.row(i + 1);
    }
    return R;
  }

  double quad(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    return u.dot(apply(v));
  }

  Eigen::MatrixXd dense() const {
    const Eigen::Index n = diag.size();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      D(i, i) = diag[i];
      if (i + 1 < n) D(i, i + 1) = D(i + 1, i) = off[i];
    }
    return D;
  }

  TriDiag& axpy(double c, const TriDiag& other) {
    diag += c * other.diag;
    off += c * other.off;
    return *this;
  }
};

/// Exact P1 mass matrix on the interior nodes (h/6, 2h/3 pattern when uniform).
inline TriDiag assemble_mass_p1(const Mesh& mesh) {
  const int n = mesh.cells();
  TriDiag M;
  M.diag.resize(n - 1);
  M.off.resize(std::max(0, n - 2));
  for (int i = 1; i < n; ++i)
    M.diag[i - 1] = (mesh.width(i - 1) + mesh.width(i)) / 3.0;
  for (int i = 1; i < n - 1; ++i) M.off[i - 1] = mesh.width(i) / 6.0;
  return M;
}

/// P1 x P0 coupling B_ik = int_{T_k} phi_i (= h_k/2 for the two hats on T_k),
/// assembled dense; the two nonzero bands are also applied directly below.
inline Eigen::MatrixXd assemble_coupling(const Mesh& mesh) {
  const int n = mesh.cells();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n - 1, n);
  for (int i = 1; i < n; ++i) {
    B(i - 1, i - 1) = mesh.width(i - 1) / 2.0;
    B(i - 1, i) = mesh.width(i) / 2.0;
  }
  return B;
}

/// Fractional stiffness matrix A_ij = E(phi_i, phi_j), dense symmetric
/// positive definite.  Uniform meshes exploit the exact translation
/// invariance of the form (the matrix is Toeplitz) for O(n) generator work.
inline Eigen::MatrixXd assemble_stiffness(const Mesh& mesh, double s) {
  if (!(s > 0.0 && s < 1.0))
    throw std::invalid_argument("assemble_stiffness: s must lie in (0,1)");
  s = detail::snap_half(s);
  const double c_ns = normalization_constant(s);
  const int nd = mesh.interior_nodes();
  Eigen::MatrixXd A(nd, nd);
  auto entry = [&](int i, int j) {  // 1-based interior node indices, j >= i
    return (j - i <= 2) ? detail::stiffness_near_entry(mesh, c_ns, s, i, j)
                        : detail::stiffness_far_entry(mesh, c_ns, s, i, j);
  };
  if (mesh.uniform()) {
    Eigen::VectorXd gen(nd);
    for (int m = 0; m < nd; ++m) gen[m] = entry(1, 1 + m);
    for (int i = 0; i < nd; ++i)
      for (int j = i; j < nd; ++j) A(i, j) = A(j, i) = gen[j - i];
  } else {
    for (int i = 0; i < nd; ++i)
      for (int j = i; j < nd; ++j) A(i, j) = A(j, i) = entry(i + 1, j + 1);
  }
  return A;
}

inline const char* assembly_method() { return "closed-form-antiderivative"; }

/// Assembled operator bundle for one (mesh, s): stiffness with its Cholesky
/// factorization (computed once, reused by every solve), mass, coupling.
class FracOperator {
 public:
  FracOperator(MeshPtr mesh, double s)
      : mesh_(std::move(mesh)),
        s_(s),
        c_ns_(normalization_constant(s)),
        A_(assemble_stiffness(*mesh_, s)),
        M_(assemble_mass_p1(*mesh_)),
        llt_(A_) {
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error(
          "FracOperator: stiffness factorization failed; assembly is invalid");
  }

  const Mesh& mesh() const { return *mesh_; }
  MeshPtr mesh_ptr() const { return mesh_; }
  double s() const { return s_; }
  double c_ns() const { return c_ns_; }
  const Eigen::MatrixXd& stiffness() const { return A_; }
  const TriDiag& mass() const { return M_; }
  const Eigen::LLT<Eigen::MatrixXd>& factorization() const { return llt_; }
  double kappa_at(double x) const { return kappa(*mesh_, s_, x); }

  /// (B z)_i for a cellwise-constant control.
  Eigen::VectorXd apply_coupling(const Eigen::VectorXd& z) const {
    const int n = mesh_->cells();
    Eigen::VectorXd r(n - 1);
    for (int i = 1; i < n; ++i)
      r[i - 1] = 0.5 * (mesh_->width(i - 1) * z[i - 1] + mesh_->width(i) * z[i]);
    return r;
  }

  /// (B^T xi)_k = int_{T_k} xi for an interior nodal vector.
  Eigen::VectorXd apply_coupling_t(const Eigen::VectorXd& xi) const {
    const int n = mesh_->cells();
    Eigen::VectorXd r(n);
    auto nodal = [&](int i) { return (i <= 0 || i >= n) ? 0.0 : xi[i - 1]; };
    for (int k = 0; k < n; ++k)
      r[k] = 0.5 * mesh_->width(k) * (nodal(k) + nodal(k + 1));
    return r;
  }

  Eigen::MatrixXd coupling_dense() const { return assemble_coupling(*mesh_); }

 private:
  MeshPtr mesh_;
  double s_, c_ns_;
  Eigen::MatrixXd A_;
  TriDiag M_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace fracocp
