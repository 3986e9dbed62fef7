#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "fracinv/errors.hpp"
#include "fracinv/mesh.hpp"

namespace fracinv {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar>;

/// Spatial field f(x) and space-time field f(x, t).
template <typename Scalar>
using SpaceFunction = std::function<Scalar(const Point<Scalar>&)>;
template <typename Scalar>
using SpaceTimeFunction = std::function<Scalar(const Point<Scalar>&, Scalar)>;

/// Interior (X_h) dofs versus full (V_h) nodes.
struct DofMap {
  std::vector<int> interior_of_full;  // interior index -> full index
  std::vector<int> full_to_interior;  // full index -> interior index, -1 on the boundary

  int n_interior() const { return static_cast<int>(interior_of_full.size()); }
  int n_full() const { return static_cast<int>(full_to_interior.size()); }

  template <typename Scalar>
  static DofMap from_mesh(const Mesh<Scalar>& mesh) {
    DofMap map;
    map.full_to_interior.assign(mesh.num_nodes(), -1);
    for (int k = 0; k < mesh.num_nodes(); ++k) {
      if (!mesh.boundary[k]) {
        map.full_to_interior[k] = map.n_interior();
        map.interior_of_full.push_back(k);
      }
    }
    return map;
  }

  template <typename Scalar, typename Derived>
  Vector<Scalar> to_interior(const Eigen::MatrixBase<Derived>& full) const {
    Vector<Scalar> out(n_interior());
    for (int i = 0; i < n_interior(); ++i) out(i) = full(interior_of_full[i]);
    return out;
  }

  /// Extends an interior vector by zero boundary values.
  template <typename Scalar, typename Derived>
  Vector<Scalar> to_full(const Eigen::MatrixBase<Derived>& interior) const {
    Vector<Scalar> out = Vector<Scalar>::Zero(n_full());
    for (int i = 0; i < n_interior(); ++i) out(interior_of_full[i]) = interior(i);
    return out;
  }
};

namespace detail {

/// Geometric P1 data of one element: measure and |K| grad(phi_a).grad(phi_b).
template <typename Scalar>
struct ElementData {
  Scalar measure;
  Eigen::Matrix<Scalar, 3, 3> stiffness;
};

template <typename Scalar>
ElementData<Scalar> element_data(const Mesh<Scalar>& mesh, int e) {
  ElementData<Scalar> d;
  d.measure = mesh.measure(e);
  d.stiffness.setZero();
  if (mesh.dim == 1) {
    const Scalar k = Scalar(1) / d.measure;
    d.stiffness(0, 0) = d.stiffness(1, 1) = k;
    d.stiffness(0, 1) = d.stiffness(1, 0) = -k;
    return d;
  }
  Eigen::Matrix<Scalar, 2, 3> grads;
  const Point<Scalar> a = mesh.node(mesh.elements(e, 0));
  const Point<Scalar> b = mesh.node(mesh.elements(e, 1));
  const Point<Scalar> c = mesh.node(mesh.elements(e, 2));
  const Scalar twice = Scalar(2) * d.measure;
  grads.col(0) << (b.y() - c.y()) / twice, (c.x() - b.x()) / twice;
  grads.col(1) << (c.y() - a.y()) / twice, (a.x() - c.x()) / twice;
  grads.col(2) << (a.y() - b.y()) / twice, (b.x() - a.x()) / twice;
  d.stiffness = d.measure * grads.transpose() * grads;
  return d;
}

/// Consistent P1 mass matrix of a simplex: |K|/((d+1)(d+2)) (1 + delta_ab).
template <typename Scalar>
Scalar local_mass(const Mesh<Scalar>& mesh, Scalar measure, int a, int b) {
  const int nv = mesh.vertices_per_element();
  const Scalar denom = Scalar(nv * (nv + 1));
  return measure * (a == b ? Scalar(2) : Scalar(1)) / denom;
}

}  // namespace detail

/// Precomputed P1 finite element space on a uniform mesh.
///
/// Holds the full-node and interior-restricted mass matrices and the element
/// data needed to re-assemble coefficient-weighted stiffness matrices quickly.
/// The interior mass and stiffness share one sparsity pattern, so per-level
/// system matrices are built by writing into `value slots` instead of re-running
/// a triplet assembly.
template <typename Scalar = double>
class FemSpace {
 public:
  explicit FemSpace(Mesh<Scalar> mesh) : mesh_(std::move(mesh)), dofs_(DofMap::from_mesh(mesh_)) {
    const int ne = mesh_.num_elements();
    const int nv = mesh_.vertices_per_element();
    elements_.reserve(ne);
    std::vector<Eigen::Triplet<Scalar>> full_mass, int_mass, int_full_mass;
    for (int e = 0; e < ne; ++e) {
      elements_.push_back(detail::element_data(mesh_, e));
      const Scalar meas = elements_.back().measure;
      for (int a = 0; a < nv; ++a) {
        const int ia = mesh_.elements(e, a);
        for (int b = 0; b < nv; ++b) {
          const int ib = mesh_.elements(e, b);
          const Scalar m = detail::local_mass(mesh_, meas, a, b);
          full_mass.emplace_back(ia, ib, m);
          const int ra = dofs_.full_to_interior[ia];
          const int rb = dofs_.full_to_interior[ib];
          if (ra >= 0) int_full_mass.emplace_back(ra, ib, m);
          if (ra >= 0 && rb >= 0) int_mass.emplace_back(ra, rb, m);
        }
      }
    }
    const int nf = dofs_.n_full(), ni = dofs_.n_interior();
    mass_full_.resize(nf, nf);
    mass_full_.setFromTriplets(full_mass.begin(), full_mass.end());
    mass_int_.resize(ni, ni);
    mass_int_.setFromTriplets(int_mass.begin(), int_mass.end());
    mass_int_full_.resize(ni, nf);
    mass_int_full_.setFromTriplets(int_full_mass.begin(), int_full_mass.end());
    lumped_full_ = mass_full_ * Vector<Scalar>::Ones(nf);
    stiffness_unit_full_ = assemble_stiffness_full(Vector<Scalar>::Ones(nf));
    build_interior_slots();
    mass_int_solver_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix<Scalar>>>(mass_int_);
    if (mass_int_solver_->info() != Eigen::Success) throw NumericError("interior mass matrix is not SPD");
  }

  const Mesh<Scalar>& mesh() const { return mesh_; }
  const DofMap& dofs() const { return dofs_; }
  int n_full() const { return dofs_.n_full(); }
  int n_interior() const { return dofs_.n_interior(); }

  const SparseMatrix<Scalar>& mass_full() const { return mass_full_; }
  const SparseMatrix<Scalar>& mass_interior() const { return mass_int_; }
  /// Interior rows of the full mass matrix, i.e. (v, chi) for chi in X_h.
  const SparseMatrix<Scalar>& mass_interior_rows() const { return mass_int_full_; }
  const SparseMatrix<Scalar>& stiffness_unit_full() const { return stiffness_unit_full_; }
  /// Row sums of the full mass matrix.
  const Vector<Scalar>& lumped_mass() const { return lumped_full_; }

  /// A_ij = int q_h grad(phi_i).grad(phi_j) over all nodes, q_h the P1 interpolant.
  SparseMatrix<Scalar> assemble_stiffness_full(const Vector<Scalar>& q) const {
    require(q.size() == n_full(), "assemble_stiffness: coefficient length mismatch");
    const int nv = mesh_.vertices_per_element();
    std::vector<Eigen::Triplet<Scalar>> trip;
    trip.reserve(elements_.size() * nv * nv);
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const Scalar qe = element_mean(q, e);
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
          trip.emplace_back(mesh_.elements(e, a), mesh_.elements(e, b), qe * elements_[e].stiffness(a, b));
    }
    SparseMatrix<Scalar> A(n_full(), n_full());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
  }

  /// Interior system matrix  mass_scale * M_int + A_int(q)  with the shared pattern.
  SparseMatrix<Scalar> system_matrix(const Vector<Scalar>& q, Scalar mass_scale) const {
    require(q.size() == n_full(), "system_matrix: coefficient length mismatch");
    SparseMatrix<Scalar> S = mass_int_;
    Scalar* values = S.valuePtr();
    for (Eigen::Index k = 0; k < S.nonZeros(); ++k) values[k] *= mass_scale;
    add_interior_stiffness(q, values);
    return S;
  }

  /// Interior stiffness A_int(q) on the shared pattern.
  SparseMatrix<Scalar> stiffness_interior(const Vector<Scalar>& q) const {
    SparseMatrix<Scalar> S = mass_int_;
    S.coeffs().setZero();
    add_interior_stiffness(q, S.valuePtr());
    return S;
  }

  /// Mean of the vertex values of q on element e (exact integral mean of q_h).
  Scalar element_mean(const Vector<Scalar>& q, int e) const {
    const int nv = mesh_.vertices_per_element();
    Scalar s = 0;
    for (int a = 0; a < nv; ++a) s += q(mesh_.elements(e, a));
    return s / Scalar(nv);
  }

  /// g_k = int psi_k grad(u).grad(p) for full-node vectors u and p.
  void accumulate_gradient_kernel(const Vector<Scalar>& u_full, const Vector<Scalar>& p_full,
                                  Eigen::Ref<Vector<Scalar>> g) const {
    const int nv = mesh_.vertices_per_element();
    const Scalar share = Scalar(1) / Scalar(nv);
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      Eigen::Matrix<Scalar, 3, 1> ue = Eigen::Matrix<Scalar, 3, 1>::Zero(), pe = ue;
      for (int a = 0; a < nv; ++a) {
        ue(a) = u_full(mesh_.elements(e, a));
        pe(a) = p_full(mesh_.elements(e, a));
      }
      const Scalar val = share * ue.dot(elements_[e].stiffness * pe);
      for (int a = 0; a < nv; ++a) g(mesh_.elements(e, a)) += val;
    }
  }

  /// Squared gradient magnitude |grad v|^2 per element for a full-node vector.
  Vector<Scalar> element_gradient_sq(const Vector<Scalar>& v_full) const {
    const int nv = mesh_.vertices_per_element();
    Vector<Scalar> out(mesh_.num_elements());
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      Eigen::Matrix<Scalar, 3, 1> ve = Eigen::Matrix<Scalar, 3, 1>::Zero();
      for (int a = 0; a < nv; ++a) ve(a) = v_full(mesh_.elements(e, a));
      out(e) = ve.dot(elements_[e].stiffness * ve) / elements_[e].measure;
    }
    return out;
  }

  Scalar element_measure(int e) const { return elements_[e].measure; }

  /// Solves M_int p = rhs.
  Vector<Scalar> solve_interior_mass(const Vector<Scalar>& rhs) const {
    return mass_int_solver_->solve(rhs);
  }

 private:
  void build_interior_slots() {
    // For every element and local pair (a, b) with both vertices interior,
    // record the position of entry (ra, rb) in mass_int_'s value array.
    const int nv = mesh_.vertices_per_element();
    slots_.assign(static_cast<std::size_t>(mesh_.num_elements()) * 9, -1);
    const int* outer = mass_int_.outerIndexPtr();
    const int* inner = mass_int_.innerIndexPtr();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      for (int a = 0; a < nv; ++a) {
        const int ra = dofs_.full_to_interior[mesh_.elements(e, a)];
        if (ra < 0) continue;
        for (int b = 0; b < nv; ++b) {
          const int rb = dofs_.full_to_interior[mesh_.elements(e, b)];
          if (rb < 0) continue;
          // column rb, row ra (column-major storage)
          for (int k = outer[rb]; k < outer[rb + 1]; ++k) {
            if (inner[k] == ra) {
              slots_[static_cast<std::size_t>(e) * 9 + a * 3 + b] = k;
              break;
            }
          }
        }
      }
    }
  }

  void add_interior_stiffness(const Vector<Scalar>& q, Scalar* values) const {
    const int nv = mesh_.vertices_per_element();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const Scalar qe = element_mean(q, e);
      const int* slot = &slots_[static_cast<std::size_t>(e) * 9];
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) {
          const int k = slot[a * 3 + b];
          if (k >= 0) values[k] += qe * elements_[e].stiffness(a, b);
        }
    }
  }

  Mesh<Scalar> mesh_;
  DofMap dofs_;
  std::vector<detail::ElementData<Scalar>> elements_;
  std::vector<int> slots_;
  SparseMatrix<Scalar> mass_full_, mass_int_, mass_int_full_, stiffness_unit_full_;
  Vector<Scalar> lumped_full_;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix<Scalar>>> mass_int_solver_;
};

// Free-function surface -----------------------------------------------------

template <typename Scalar>
SparseMatrix<Scalar> assemble_mass(const Mesh<Scalar>& mesh) {
  return FemSpace<Scalar>(mesh).mass_full();
}

template <typename Scalar>
SparseMatrix<Scalar> assemble_stiffness(const Mesh<Scalar>& mesh, const Vector<Scalar>& q) {
  return FemSpace<Scalar>(mesh).assemble_stiffness_full(q);
}

/// Nodal samples g(x_i) on all nodes.
template <typename Scalar>
Vector<Scalar> lagrange_interpolate(const Mesh<Scalar>& mesh, const SpaceFunction<Scalar>& g) {
  Vector<Scalar> v(mesh.num_nodes());
  for (int k = 0; k < mesh.num_nodes(); ++k) {
    v(k) = g(mesh.node(k));
    if (!std::isfinite(static_cast<double>(v(k)))) throw NumericError("lagrange_interpolate: non-finite value");
  }
  return v;
}

/// Load vector F = M * f_nodal over all nodes at time t.
template <typename Scalar>
Vector<Scalar> assemble_load(const FemSpace<Scalar>& space, const SpaceTimeFunction<Scalar>& f, Scalar t) {
  const auto& mesh = space.mesh();
  Vector<Scalar> fn(mesh.num_nodes());
  for (int k = 0; k < mesh.num_nodes(); ++k) {
    fn(k) = f(mesh.node(k), t);
    if (!std::isfinite(static_cast<double>(fn(k)))) throw NumericError("assemble_load: non-finite source value");
  }
  return space.mass_full() * fn;
}

/// L2 projection onto X_h of a full-node P1 field; returns interior values.
template <typename Scalar>
Vector<Scalar> l2_project(const FemSpace<Scalar>& space, const Vector<Scalar>& v_full) {
  require(v_full.size() == space.n_full(), "l2_project: size mismatch");
  return space.solve_interior_mass(space.mass_interior_rows() * v_full);
}

template <typename Scalar>
Vector<Scalar> l2_project(const FemSpace<Scalar>& space, const SpaceFunction<Scalar>& v) {
  return l2_project(space, lagrange_interpolate(space.mesh(), v));
}

/// sqrt(v^T M v) for a full-node vector.
template <typename Scalar>
Scalar l2_norm(const FemSpace<Scalar>& space, const Vector<Scalar>& v_full) {
  require(v_full.size() == space.n_full(), "l2_norm: size mismatch");
  using std::sqrt;
  const Scalar s = v_full.dot(space.mass_full() * v_full);
  return sqrt(s > Scalar(0) ? s : Scalar(0));
}

template <typename Scalar>
Scalar h1_seminorm(const FemSpace<Scalar>& space, const Vector<Scalar>& v_full) {
  require(v_full.size() == space.n_full(), "h1_seminorm: size mismatch");
  using std::sqrt;
  const Scalar s = v_full.dot(space.stiffness_unit_full() * v_full);
  return sqrt(s > Scalar(0) ? s : Scalar(0));
}

/// Interior-vector L2 norm (zero boundary values).
template <typename Scalar>
Scalar l2_norm_interior(const FemSpace<Scalar>& space, const Vector<Scalar>& v_int) {
  require(v_int.size() == space.n_interior(), "l2_norm_interior: size mismatch");
  using std::sqrt;
  const Scalar s = v_int.dot(space.mass_interior() * v_int);
  return sqrt(s > Scalar(0) ? s : Scalar(0));
}

}  // namespace fracinv
