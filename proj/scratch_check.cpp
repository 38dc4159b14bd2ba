// Throwaway sanity check of the closed-form assembly against brute-force
// adaptive quadrature. Not part of the build.
#include <cstdio>
#include <cmath>
#include "fracocp/mesh.hpp"
#include "fracocp/assembly.hpp"
#include "fracocp/quadrature.hpp"

using namespace fracocp;

static double hat(const Mesh& m, int idx, double x) {
  const double xl = m.node(idx - 1), xc = m.node(idx), xr = m.node(idx + 1);
  if (x <= xl || x >= xr) return 0.0;
  return (x < xc) ? (x - xl) / (xc - xl) : (xr - x) / (xr - xc);
}

// brute-force E(phi_i, phi_j)
static double brute_entry(const Mesh& mesh, double s, int i, int j) {
  const double C = normalization_constant(s);
  const int n = mesh.cells();
  auto F = [&](double x, double y) {
    if (x == y) return 0.0;
    return (hat(mesh, i, x) - hat(mesh, i, y)) * (hat(mesh, j, x) - hat(mesh, j, y)) *
           std::pow(std::abs(x - y), -1.0 - 2.0 * s);
  };
  double dbl = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      bool rel = ((k == i - 1 || k == i || l == i - 1 || l == i) &&
                  (k == j - 1 || k == j || l == j - 1 || l == j));
      if (!rel) continue;
      const double xa = mesh.node(k), xb = mesh.node(k + 1);
      const double ya = mesh.node(l), yb = mesh.node(l + 1);
      double val = 0.0;
      if (k == l) {
        // split inner at y = x, power substitution to tame the singularity
        const int q = std::max(2, (int)std::ceil(1.5 / (2.0 - 2.0 * s)));
        auto outer = [&](double x) {
          auto right = [&](double v) {
            double vq = std::pow(v, q);
            return F(x, x + vq) * q * std::pow(v, q - 1);
          };
          auto left = [&](double v) {
            double vq = std::pow(v, q);
            return F(x, x - vq) * q * std::pow(v, q - 1);
          };
          double r = quad::integrate(right, 0.0, std::pow(yb - x, 1.0 / q), 1e-14, 32).value;
          double lft = quad::integrate(left, 0.0, std::pow(x - ya, 1.0 / q), 1e-14, 32).value;
          return r + lft;
        };
        val = quad::integrate(outer, xa, xb, 3e-13, 32).value;
      } else {
        auto outer = [&](double x) {
          auto g = [&](double y) { return F(x, y); };
          return quad::integrate(g, ya, yb, 1e-14, 32).value;
        };
        val = 2.0 * quad::integrate(outer, xa, xb, 3e-13, 32).value;
      }
      dbl += val;
    }
  }
  double kap = 0.0;
  if (std::abs(i - j) <= 1) {
    auto g = [&](double x) { return hat(mesh, i, x) * hat(mesh, j, x) * kappa(mesh, s, x); };
    kap = quad::integrate(g, mesh.a(), mesh.b(), 1e-13, 36).value;
  }
  return 0.5 * C * dbl + kap;
}

int main() {
  // kernel_moment pinned examples
  printf("km identical m2 s.5 (expect 1): %.15g\n", kernel_moment(0, 1, 0, 1, 2, 0.5));
  printf("km disjoint m0 s.5 (expect log(4/3)=%.15g): %.15g\n", std::log(4.0 / 3.0),
         kernel_moment(0, 1, 2, 3, 0, 0.5));
  printf("km identical m1 (expect 0): %.15g\n", kernel_moment(0, 1, 0, 1, 1, 0.3));

  // kernel_poly_moment vs brute quadrature
  for (double s : {0.3, 0.5, 0.7}) {
    for (double g : {0.0, 0.05, 1.0}) {
      for (int a : {0, 1}) {
        for (int b : {0, 1}) {
          if (g == 0.0 && a + b < 2) continue;
          double A = 0.4, B = 0.7;
          double cf = detail::kernel_poly_moment(a, b, A, B, g, s);
          auto outer = [&](double u) {
            auto inner = [&](double v) {
              return std::pow(u, a) * std::pow(v, b) * std::pow(u + v + g, -1.0 - 2.0 * s);
            };
            return quad::integrate(inner, 0.0, B, 1e-14, 32).value;
          };
          double bq = quad::integrate(outer, 0.0, A, 1e-12, 32).value;
          printf("J(a=%d,b=%d,g=%.2f,s=%.1f): closed=%.12g quad=%.12g rel=%.2e\n", a, b, g, s,
                 cf, bq, std::abs(cf - bq) / std::abs(bq));
        }
      }
    }
  }
  // adjacent-type with a+b=2
  for (double s : {0.3, 0.5, 0.7}) {
    for (auto ab : {std::pair{2, 0}, {1, 1}, {0, 2}}) {
      double A = 0.5, B = 0.25;
      double cf = detail::kernel_poly_moment(ab.first, ab.second, A, B, 0.0, s);
      const int q = 3;
      auto outer = [&](double t) {  // u = t^q substitution for the corner
        double u = std::pow(t, q);
        auto inner = [&](double v) {
          return std::pow(u, ab.first) * std::pow(v, ab.second) *
                 std::pow(u + v, -1.0 - 2.0 * s);
        };
        double iv = quad::integrate(inner, 0.0, B, 1e-14, 32).value;
        return iv * q * std::pow(t, q - 1);
      };
      double bq = quad::integrate(outer, 0.0, std::pow(A, 1.0 / q), 1e-12, 32).value;
      printf("Jadj(a=%d,b=%d,s=%.1f): closed=%.12g quad=%.12g rel=%.2e\n", ab.first, ab.second,
             s, cf, bq, std::abs(cf - bq) / std::abs(bq));
    }
  }

  // stiffness vs brute force, n=6 nonuniform-ish and uniform
  for (double s : {0.3, 0.5, 0.7}) {
    auto mesh = build_uniform_mesh(-0.5, 0.5, 6);
    auto A = assemble_stiffness(*mesh, s);
    double worst = 0.0;
    for (int i = 1; i <= 5; ++i) {
      for (int j = i; j <= 5; ++j) {
        double oracle = brute_entry(*mesh, s, i, j);
        double rel = std::abs(A(i - 1, j - 1) - oracle) / std::abs(oracle);
        worst = std::max(worst, rel);
        if (rel > 1e-8)
          printf("  MISMATCH s=%.1f (%d,%d): closed=%.12g brute=%.12g rel=%.2e\n", s, i, j,
                 A(i - 1, j - 1), oracle, rel);
      }
    }
    printf("stiffness s=%.1f worst rel = %.3e\n", s, worst);
  }
  // nonuniform check
  {
    Eigen::VectorXd nodes(6);
    nodes << -0.5, -0.3, -0.05, 0.12, 0.3, 0.5;
    Mesh mesh(nodes, false);
    for (double s : {0.3, 0.5, 0.75}) {
      auto A = assemble_stiffness(mesh, s);
      double worst = 0.0;
      for (int i = 1; i <= 4; ++i)
        for (int j = i; j <= 4; ++j) {
          double oracle = brute_entry(mesh, s, i, j);
          double rel = std::abs(A(i - 1, j - 1) - oracle) / std::abs(oracle);
          worst = std::max(worst, rel);
        }
      printf("nonuniform stiffness s=%.2f worst rel = %.3e\n", s, worst);
    }
  }
  return 0;
}
