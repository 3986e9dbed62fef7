#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fracinv/errors.hpp"

namespace fracinv {

/// Point in the plane; 1D meshes leave the second coordinate at zero.
template <typename Scalar>
using Point = Eigen::Matrix<Scalar, 2, 1>;

/// Uniform simplicial mesh of (0,1) or (0,1)^2.
///
/// Nodes are ordered lexicographically by lattice index (x fastest), so node
/// (i, j) of the square lattice has index j*(M+1) + i. Elements are stored as
/// rows of `elements`; in 1D only the first two columns are meaningful.
template <typename Scalar = double>
struct Mesh {
  using Nodes = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
  using Elements = Eigen::Matrix<int, Eigen::Dynamic, 3>;

  int dim = 1;
  int M = 0;
  Nodes nodes;
  Elements elements;
  std::vector<bool> boundary;

  Scalar h() const { return Scalar(1) / Scalar(M); }
  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  int num_elements() const { return static_cast<int>(elements.rows()); }
  int vertices_per_element() const { return dim + 1; }
  Point<Scalar> node(int i) const { return nodes.row(i).transpose(); }

  /// Signed measure of element e (length in 1D, area in 2D).
  Scalar measure(int e) const {
    if (dim == 1) return nodes(elements(e, 1), 0) - nodes(elements(e, 0), 0);
    const Point<Scalar> a = node(elements(e, 0));
    const Point<Scalar> b = node(elements(e, 1));
    const Point<Scalar> c = node(elements(e, 2));
    return Scalar(0.5) * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
  }

  /// Lattice index (i, j) of node k.
  std::pair<int, int> lattice(int k) const {
    if (dim == 1) return {k, 0};
    return {k % (M + 1), k / (M + 1)};
  }
};

using Meshd = Mesh<double>;

template <typename Scalar = double>
Mesh<Scalar> build_interval_mesh(int M) {
  require(M >= 2, "build_interval_mesh: M must be at least 2");
  Mesh<Scalar> mesh;
  mesh.dim = 1;
  mesh.M = M;
  mesh.nodes.setZero(M + 1, 2);
  mesh.elements.setZero(M, 3);
  mesh.boundary.assign(M + 1, false);
  for (int i = 0; i <= M; ++i) mesh.nodes(i, 0) = Scalar(i) / Scalar(M);
  for (int e = 0; e < M; ++e) {
    mesh.elements(e, 0) = e;
    mesh.elements(e, 1) = e + 1;
  }
  mesh.boundary.front() = true;
  mesh.boundary.back() = true;
  return mesh;
}

/// Uniform triangulation of the unit square: each of the M^2 cells is cut
/// along its lower-left to upper-right diagonal.
template <typename Scalar = double>
Mesh<Scalar> build_square_mesh(int M) {
  require(M >= 2, "build_square_mesh: M must be at least 2");
  Mesh<Scalar> mesh;
  mesh.dim = 2;
  mesh.M = M;
  const int n = M + 1;
  mesh.nodes.resize(n * n, 2);
  mesh.boundary.assign(n * n, false);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int k = j * n + i;
      mesh.nodes(k, 0) = Scalar(i) / Scalar(M);
      mesh.nodes(k, 1) = Scalar(j) / Scalar(M);
      mesh.boundary[k] = (i == 0 || j == 0 || i == M || j == M);
    }
  }
  mesh.elements.resize(2 * M * M, 3);
  int e = 0;
  for (int j = 0; j < M; ++j) {
    for (int i = 0; i < M; ++i) {
      const int ll = j * n + i, lr = ll + 1, ul = ll + n, ur = ul + 1;
      mesh.elements.row(e++) << ll, lr, ur;
      mesh.elements.row(e++) << ll, ur, ul;
    }
  }
  return mesh;
}

/// Distance from a point of the closed domain to the boundary.
template <typename Scalar>
Scalar boundary_distance(const Mesh<Scalar>& mesh, const Point<Scalar>& x) {
  using std::min;
  Scalar d = min(x.x(), Scalar(1) - x.x());
  if (mesh.dim == 2) d = min(d, min(x.y(), Scalar(1) - x.y()));
  return d;
}

template <typename Scalar>
bool nested(const Mesh<Scalar>& fine, const Mesh<Scalar>& coarse) {
  return fine.dim == coarse.dim && coarse.M > 0 && fine.M % coarse.M == 0;
}

/// Samples a fine nodal field at the coarse lattice points. Exact for nested
/// meshes since every coarse node is also a fine node.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> restrict_to_coarse(const Mesh<Scalar>& fine, const Mesh<Scalar>& coarse,
                                                            const Eigen::MatrixBase<Derived>& values) {
  require(nested(fine, coarse), "restrict_to_coarse: meshes are not nested");
  require(values.size() == fine.num_nodes(), "restrict_to_coarse: size mismatch");
  const int r = fine.M / coarse.M;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(coarse.num_nodes());
  for (int k = 0; k < coarse.num_nodes(); ++k) {
    const auto [i, j] = coarse.lattice(k);
    out(k) = values(j * r * (fine.M + 1) + i * r);
  }
  return out;
}

/// Prolongation matrix P (fine nodes x coarse nodes): column c holds the fine
/// nodal values of the coarse hat function of node c.
template <typename Scalar>
Eigen::SparseMatrix<Scalar> prolongation(const Mesh<Scalar>& coarse, const Mesh<Scalar>& fine);

/// Evaluates the P1 interpolant of `values` (given on `mesh` nodes) at x.
template <typename Scalar, typename Derived>
Scalar evaluate_p1(const Mesh<Scalar>& mesh, const Eigen::MatrixBase<Derived>& values, const Point<Scalar>& x) {
  using std::floor;
  const int M = mesh.M;
  auto cell = [M](Scalar s) {
    int i = static_cast<int>(floor(s * Scalar(M)));
    if (i < 0) i = 0;
    if (i > M - 1) i = M - 1;
    return i;
  };
  const int i = cell(x.x());
  const Scalar s = x.x() * Scalar(M) - Scalar(i);
  if (mesh.dim == 1) return (Scalar(1) - s) * values(i) + s * values(i + 1);
  const int j = cell(x.y());
  const Scalar t = x.y() * Scalar(M) - Scalar(j);
  const int n = M + 1;
  const int ll = j * n + i, lr = ll + 1, ul = ll + n, ur = ul + 1;
  // Lower triangle (ll, lr, ur) when s >= t, upper (ll, ur, ul) otherwise.
  if (s >= t) return (Scalar(1) - s) * values(ll) + (s - t) * values(lr) + t * values(ur);
  return (Scalar(1) - t) * values(ll) + (t - s) * values(ul) + s * values(ur);
}

/// Transfers a nodal field between arbitrary uniform meshes of the same
/// dimension by point evaluation of the source P1 interpolant.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> interpolate_between(const Mesh<Scalar>& from, const Mesh<Scalar>& to,
                                                             const Eigen::MatrixBase<Derived>& values) {
  require(from.dim == to.dim, "interpolate_between: dimension mismatch");
  require(values.size() == from.num_nodes(), "interpolate_between: size mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(to.num_nodes());
  for (int k = 0; k < to.num_nodes(); ++k) out(k) = evaluate_p1(from, values, to.node(k));
  return out;
}

template <typename Scalar>
Eigen::SparseMatrix<Scalar> prolongation(const Mesh<Scalar>& coarse, const Mesh<Scalar>& fine) {
  require(nested(fine, coarse), "prolongation: meshes are not nested");
  std::vector<Eigen::Triplet<Scalar>> trip;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> hat = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(coarse.num_nodes());
  // Each fine node sees at most dim+1 nonzero coarse hats; probe them through the
  // cell containing the node.
  for (int k = 0; k < fine.num_nodes(); ++k) {
    const Point<Scalar> x = fine.node(k);
    const int M = coarse.M;
    auto cell = [M](Scalar s) {
      int i = static_cast<int>(std::floor(s * Scalar(M)));
      return i < 0 ? 0 : (i > M - 1 ? M - 1 : i);
    };
    const int i = cell(x.x());
    std::vector<int> cand;
    if (coarse.dim == 1) {
      cand = {i, i + 1};
    } else {
      const int j = cell(x.y());
      const int n = M + 1;
      cand = {j * n + i, j * n + i + 1, (j + 1) * n + i, (j + 1) * n + i + 1};
    }
    for (int c : cand) {
      hat(c) = Scalar(1);
      const Scalar v = evaluate_p1(coarse, hat, x);
      hat(c) = Scalar(0);
      if (std::abs(v) > Scalar(1e-14)) trip.emplace_back(k, c, v);
    }
  }
  Eigen::SparseMatrix<Scalar> P(fine.num_nodes(), coarse.num_nodes());
  P.setFromTriplets(trip.begin(), trip.end());
  return P;
}

}  // namespace fracinv
