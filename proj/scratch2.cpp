#include <cstdio>
#include <cmath>
#include <chrono>
#include "fracocp/mesh.hpp"
#include "fracocp/assembly.hpp"
#include "fracocp/quadrature.hpp"

using namespace fracocp;
static long evals = 0;

int main() {
  printf("km identical m2 s.5 (expect 1): %.15g\n", kernel_moment(0, 1, 0, 1, 2, 0.5));
  printf("km disjoint m0 s.5 (expect %.15g): %.15g\n", std::log(4.0 / 3.0),
         kernel_moment(0, 1, 2, 3, 0, 0.5));
  printf("km identical m1 (expect 0): %.15g\n", kernel_moment(0, 1, 0, 1, 1, 0.3));
  fflush(stdout);

  auto t0 = std::chrono::steady_clock::now();
  for (double s : {0.3, 0.5, 0.7}) {
    double g = 1.0, A = 0.4, B = 0.7;
    int a = 0, b = 0;
    double cf = detail::kernel_poly_moment(a, b, A, B, g, s);
    auto outer = [&](double u) {
      auto inner = [&](double v) {
        ++evals;
        return std::pow(u + v + g, -1.0 - 2.0 * s);
      };
      return quad::integrate(inner, 0.0, B, 1e-14, 30).value;
    };
    double bq = quad::integrate(outer, 0.0, A, 1e-12, 30).value;
    auto t1 = std::chrono::steady_clock::now();
    printf("J(0,0,g=1,s=%.1f): closed=%.12g quad=%.12g rel=%.2e evals=%ld t=%lldms\n", s, cf,
           bq, std::abs(cf - bq) / std::abs(bq), evals,
           (long long)std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count());
    fflush(stdout);
  }
  return 0;
}
