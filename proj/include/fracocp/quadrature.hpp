#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace fracocp {

/// Adaptive composite Gauss-Legendre quadrature.  Deliberately independent of
/// the closed-form antiderivatives used by the assembler: this is the
/// oracle-side integration strategy.
namespace quad {

inline constexpr int kG15 = 15;
inline constexpr double kG15Nodes[kG15] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345, 0.0,                 0.2011940939974345,
    0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
inline constexpr double kG15Weights[kG15] = {
    0.03075324199611727, 0.07036604748810812, 0.1071592204671719,
    0.1395706779261543,  0.1662692058169939,  0.1861610000155622,
    0.1984314853271116,  0.2025782419255613,  0.1984314853271116,
    0.1861610000155622,  0.1662692058169939,  0.1395706779261543,
    0.1071592204671719,  0.07036604748810812, 0.03075324199611727};

template <class F>
double gauss15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < kG15; ++i) acc += kG15Weights[i] * f(c + h * kG15Nodes[i]);
  return acc * h;
}

struct Result {
  double value = 0.0;
  bool converged = true;
};

namespace detail {
template <class F>
void adapt_rec(const F& f, double a, double b, double whole, double tol, int depth,
               Result& out) {
  const double m = 0.5 * (a + b);
  const double left = gauss15(f, a, m), right = gauss15(f, m, b);
  const double err = std::abs(whole - left - right);
  // stop at the requested tolerance or at the roundoff floor of the panel
  const double floor_tol =
      64.0 * std::numeric_limits<double>::epsilon() *
      (std::abs(left) + std::abs(right) + std::abs(whole));
  if (err <= std::max(tol, floor_tol) || depth <= 0) {
    out.value += left + right;
    if (err > std::max(tol, floor_tol)) out.converged = false;
    return;
  }
  adapt_rec(f, a, m, left, 0.5 * tol, depth - 1, out);
  adapt_rec(f, m, b, right, 0.5 * tol, depth - 1, out);
}
}  // namespace detail

/// Integrate f over [a, b] to absolute tolerance tol (best effort at depth
/// exhaustion; Result::converged reports success).
template <class F>
Result integrate(const F& f, double a, double b, double tol, int max_depth = 48) {
  if (!(b > a)) return {0.0, true};
  Result out;
  detail::adapt_rec(f, a, b, gauss15(f, a, b), tol, max_depth, out);
  return out;
}

/// Oracle-grade integration: throws if adaptivity failed to converge.
template <class F>
double integrate_strict(const F& f, double a, double b, double tol, int max_depth = 48) {
  Result r = integrate(f, a, b, tol, max_depth);
  if (!r.converged)
    throw std::runtime_error("quadrature oracle: adaptive integration did not converge");
  return r.value;
}

}  // namespace quad
}  // namespace fracocp
