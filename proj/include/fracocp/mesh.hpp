#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

namespace fracocp {

/// 1D mesh of an interval (a, b).  States live in the continuous
/// piecewise-linear space vanishing at both endpoints (and, by extension,
/// outside the interval); controls are piecewise constant per cell.
/// Immutable after construction.
class Mesh {
 public:
  /// Nodes must be strictly increasing with at least 3 entries
  /// (>= 2 cells, so that at least one interior degree of freedom exists).
  explicit Mesh(Eigen::VectorXd nodes, bool uniform = false)
      : nodes_(std::move(nodes)), uniform_(uniform) {
    if (nodes_.size() < 3)
      throw std::invalid_argument("Mesh: need at least 2 cells");
    for (Eigen::Index i = 0; i + 1 < nodes_.size(); ++i)
      if (!(nodes_[i] < nodes_[i + 1]))
        throw std::invalid_argument("Mesh: nodes must be strictly increasing");
    hmax_ = 0.0;
    for (Eigen::Index k = 0; k + 1 < nodes_.size(); ++k)
      hmax_ = std::max(hmax_, nodes_[k + 1] - nodes_[k]);
  }

  double a() const { return nodes_[0]; }
  double b() const { return nodes_[nodes_.size() - 1]; }
  /// Number of cells n; nodes are x_0..x_n, interior DOFs x_1..x_{n-1}.
  int cells() const { return static_cast<int>(nodes_.size()) - 1; }
  int interior_nodes() const { return cells() - 1; }
  double node(int i) const { return nodes_[i]; }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  double width(int k) const { return nodes_[k + 1] - nodes_[k]; }
  double max_width() const { return hmax_; }
  bool uniform() const { return uniform_; }

  /// Cell index containing x.  Interior nodes resolve to the left cell
  /// (documented tie-break); x == a resolves to cell 0.
  int locate(double x) const {
    if (x < a() || x > b())
      throw std::domain_error("Mesh::locate: point outside domain");
    if (x <= nodes_[1]) return 0;
    if (x >= nodes_[nodes_.size() - 2]) return cells() - 1;
    // first node >= x, then take the cell to its left
    const double* begin = nodes_.data();
    const double* pos = std::lower_bound(begin, begin + nodes_.size(), x);
    int i = static_cast<int>(pos - begin);
    return i - 1;
  }

 private:
  Eigen::VectorXd nodes_;
  bool uniform_;
  double hmax_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Partition (a, b) into n equal cells.
inline MeshPtr build_uniform_mesh(double a, double b, int n) {
  if (!(b > a))
    throw std::invalid_argument("build_uniform_mesh: requires b > a");
  if (n < 2)
    throw std::invalid_argument("build_uniform_mesh: requires n >= 2 cells");
  Eigen::VectorXd nodes(n + 1);
  const double h = (b - a) / n;
  for (int i = 0; i <= n; ++i) nodes[i] = a + h * i;
  nodes[n] = b;  // endpoint exact
  return std::make_shared<Mesh>(std::move(nodes), true);
}

/// Bisect every cell; the refined mesh nests the coarse one exactly.
inline MeshPtr refine(const Mesh& mesh) {
  const int n = mesh.cells();
  Eigen::VectorXd nodes(2 * n + 1);
  for (int k = 0; k < n; ++k) {
    nodes[2 * k] = mesh.node(k);
    nodes[2 * k + 1] = 0.5 * (mesh.node(k) + mesh.node(k + 1));
  }
  nodes[2 * n] = mesh.node(n);
  return std::make_shared<Mesh>(std::move(nodes), mesh.uniform());
}

/// Continuous piecewise-linear function with zero boundary values,
/// stored by its interior nodal values (zero outside the domain).
struct P1Function {
  MeshPtr mesh;
  Eigen::VectorXd values;  // size = interior_nodes()

  P1Function(MeshPtr m, Eigen::VectorXd v) : mesh(std::move(m)), values(std::move(v)) {
    if (values.size() != mesh->interior_nodes())
      throw std::invalid_argument("P1Function: value count must equal interior node count");
  }
  static P1Function zero(MeshPtr m) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m->interior_nodes());
    return P1Function(std::move(m), std::move(v));
  }

  /// Nodal value with the homogeneous boundary condition baked in.
  double nodal(int i) const {
    const int n = mesh->cells();
    if (i <= 0 || i >= n) return 0.0;
    return values[i - 1];
  }

  /// Full nodal vector x_0..x_n (boundary zeros included).
  Eigen::VectorXd full_nodal() const {
    const int n = mesh->cells();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
    f.segment(1, n - 1) = values;
    return f;
  }

  double operator()(double x) const {
    const int k = mesh->locate(x);
    const double x0 = mesh->node(k), x1 = mesh->node(k + 1);
    const double t = (x - x0) / (x1 - x0);
    return (1.0 - t) * nodal(k) + t * nodal(k + 1);
  }
};

/// Piecewise-constant function, one value per cell.
struct P0Function {
  MeshPtr mesh;
  Eigen::VectorXd values;  // size = cells()

  P0Function(MeshPtr m, Eigen::VectorXd v) : mesh(std::move(m)), values(std::move(v)) {
    if (values.size() != mesh->cells())
      throw std::invalid_argument("P0Function: value count must equal cell count");
  }
  static P0Function zero(MeshPtr m) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m->cells());
    return P0Function(std::move(m), std::move(v));
  }
  static P0Function constant(MeshPtr m, double c) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(m->cells(), c);
    return P0Function(std::move(m), std::move(v));
  }

  double operator()(double x) const { return values[mesh->locate(x)]; }

  /// Exact L2 norm, sqrt(sum_k h_k z_k^2).
  double l2_norm() const {
    double acc = 0.0;
    for (int k = 0; k < mesh->cells(); ++k)
      acc += mesh->width(k) * values[k] * values[k];
    return std::sqrt(acc);
  }
};

inline double evaluate(const P1Function& f, double x) { return f(x); }
inline double evaluate(const P0Function& f, double x) { return f(x); }

/// Re-express a coarse P1 function on a bisection refinement (exact nesting).
inline P1Function prolong(const P1Function& coarse, MeshPtr fine) {
  const Mesh& mc = *coarse.mesh;
  if (fine->cells() != 2 * mc.cells())
    throw std::invalid_argument("prolong: fine mesh must be the bisection refinement");
  Eigen::VectorXd v(fine->interior_nodes());
  for (int i = 1; i < fine->cells(); ++i) {
    if (i % 2 == 0)
      v[i - 1] = coarse.nodal(i / 2);
    else
      v[i - 1] = 0.5 * (coarse.nodal(i / 2) + coarse.nodal(i / 2 + 1));
  }
  return P1Function(std::move(fine), std::move(v));
}

/// Inject a coarse P0 function into the bisection refinement.
inline P0Function prolong(const P0Function& coarse, MeshPtr fine) {
  const Mesh& mc = *coarse.mesh;
  if (fine->cells() != 2 * mc.cells())
    throw std::invalid_argument("prolong: fine mesh must be the bisection refinement");
  Eigen::VectorXd v(fine->cells());
  for (int k = 0; k < fine->cells(); ++k) v[k] = coarse.values[k / 2];
  return P0Function(std::move(fine), std::move(v));
}

}  // namespace fracocp
