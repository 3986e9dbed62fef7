#pragma once

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "fracinv/cq.hpp"
#include "fracinv/errors.hpp"
#include "fracinv/fem.hpp"

namespace fracinv {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Coefficient q^1..q^N, one full-node column per time level (column n-1 holds q^n).
template <typename Scalar = double>
struct CoefficientField {
  Matrix<Scalar> levels;
  Scalar c0 = Scalar(0.5);
  Scalar c1 = Scalar(5);

  int num_levels() const { return static_cast<int>(levels.cols()); }
  int num_nodes() const { return static_cast<int>(levels.rows()); }

  bool feasible() const {
    return (levels.array() >= c0).all() && (levels.array() <= c1).all();
  }

  /// Samples q(x, t_n) at all nodes for n = 1..N.
  static CoefficientField sample(const Mesh<Scalar>& mesh, const CQScheme<Scalar>& scheme,
                                 const SpaceTimeFunction<Scalar>& q, Scalar c0, Scalar c1) {
    CoefficientField field;
    field.c0 = c0;
    field.c1 = c1;
    field.levels.resize(mesh.num_nodes(), scheme.N);
    for (int n = 1; n <= scheme.N; ++n)
      for (int k = 0; k < mesh.num_nodes(); ++k) field.levels(k, n - 1) = q(mesh.node(k), scheme.time(n));
    return field;
  }

  static CoefficientField constant(int n_nodes, int N, Scalar value, Scalar c0, Scalar c1) {
    CoefficientField field;
    field.c0 = c0;
    field.c1 = c1;
    field.levels = Matrix<Scalar>::Constant(n_nodes, N, value);
    return field;
  }
};

/// Mesh subdivisions and time steps of one discretization.
struct GridChoice {
  int M = 0;
  int N = 0;
};

/// U^0..U^N on interior nodes, one column per level.
template <typename Scalar = double>
struct Trajectory {
  Matrix<Scalar> levels;
  Scalar tau = 0;
  Scalar alpha = 0;

  int num_steps() const { return static_cast<int>(levels.cols()) - 1; }
};

template <typename Scalar = double>
struct ProblemData {
  SpaceFunction<Scalar> u0;
  SpaceTimeFunction<Scalar> f;
};

enum class LinearSolverKind { Cholesky, ConjugateGradient };

/// Per-level SPD systems  tau^-alpha M_int + A_int(q^n).
///
/// Factorizations are kept for the adjoint sweep while their estimated
/// footprint stays under `cache_budget` factor entries; beyond that they are
/// recomputed on demand. A time-independent coefficient is factored once.
template <typename Scalar = double>
class LevelSystems {
 public:
  using SpMat = SparseMatrix<Scalar>;
  using Cholesky = Eigen::SimplicialLLT<SpMat>;
  using Iterative = Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<Scalar>>;

  LevelSystems(const FemSpace<Scalar>& space, const CQScheme<Scalar>& scheme, const CoefficientField<Scalar>& q,
               LinearSolverKind kind, long cache_budget)
      : space_(space), scheme_(scheme), q_(q), kind_(kind), budget_(cache_budget) {
    require(q.num_levels() == scheme.N, "LevelSystems: coefficient level count must equal N");
    require(q.num_nodes() == space.n_full(), "LevelSystems: coefficient size mismatch");
    constant_ = true;
    for (int n = 1; n < q.num_levels() && constant_; ++n) constant_ = (q.levels.col(n) == q.levels.col(0));
    cache_.resize(constant_ ? 1 : scheme.N);
  }

  bool time_independent() const { return constant_; }

  /// Solves level n (1-based) to relative residual <= 1e-10.
  Vector<Scalar> solve(int n, const Vector<Scalar>& rhs) {
    const int slot = constant_ ? 0 : n - 1;
    if (kind_ == LinearSolverKind::ConjugateGradient) return solve_iterative(n, rhs);
    std::shared_ptr<Cholesky> llt = cache_[slot];
    if (!llt) {
      llt = std::make_shared<Cholesky>(space_.system_matrix(q_.levels.col(n - 1), scheme_.tau_pow));
      if (llt->info() != Eigen::Success) throw NumericError("system matrix is not SPD", n);
      const long entries = static_cast<long>(llt->matrixL().nestedExpression().nonZeros());
      if (constant_ || (cached_entries_ + entries) <= budget_) {
        cache_[slot] = llt;
        cached_entries_ += entries;
      }
    }
    Vector<Scalar> x = llt->solve(rhs);
    check_finite(x, n);
    return x;
  }

 private:
  Vector<Scalar> solve_iterative(int n, const Vector<Scalar>& rhs) {
    const SpMat S = space_.system_matrix(q_.levels.col(n - 1), scheme_.tau_pow);
    Iterative cg;
    cg.setTolerance(Scalar(1e-10));
    cg.setMaxIterations(10 * static_cast<int>(S.rows()) + 100);
    cg.compute(S);
    Vector<Scalar> x = cg.solve(rhs);
    if (cg.info() != Eigen::Success) throw NumericError("conjugate gradient did not converge", n);
    check_finite(x, n);
    return x;
  }

  static void check_finite(const Vector<Scalar>& x, int n) {
    if (!x.allFinite()) throw NumericError("non-finite solution", n);
  }

  const FemSpace<Scalar>& space_;
  const CQScheme<Scalar>& scheme_;
  CoefficientField<Scalar> q_;
  LinearSolverKind kind_;
  long budget_;
  long cached_entries_ = 0;
  bool constant_ = false;
  std::vector<std::shared_ptr<Cholesky>> cache_;
};

/// Fully discrete subdiffusion solver: P1 in space, backward Euler CQ in time.
///
/// For n = 1..N it solves
///   (tau^-a M + A(q^n)) U^n = F^n + tau^-a M (b_n^(a-1) U^0 - sum_{j=1}^n b_j U^{n-j}),
/// where U^0 = P_h u0 and F^n the interior load at t_n.
template <typename Scalar = double>
class ForwardSolver {
 public:
  ForwardSolver(FemSpace<Scalar> space, CQScheme<Scalar> scheme, const ProblemData<Scalar>& data)
      : space_(std::move(space)), scheme_(std::move(scheme)) {
    initial_ = l2_project(space_, data.u0);
    loads_.resize(space_.n_interior(), scheme_.N);
    Vector<Scalar> fn(space_.n_full());
    for (int n = 1; n <= scheme_.N; ++n) {
      const Scalar t = scheme_.time(n);
      for (int k = 0; k < space_.n_full(); ++k) fn(k) = data.f(space_.mesh().node(k), t);
      if (!fn.allFinite()) throw NumericError("non-finite source value", n);
      loads_.col(n - 1) = space_.mass_interior_rows() * fn;
    }
  }

  const FemSpace<Scalar>& space() const { return space_; }
  const CQScheme<Scalar>& scheme() const { return scheme_; }
  const Vector<Scalar>& initial_state() const { return initial_; }
  const Matrix<Scalar>& loads() const { return loads_; }

  void set_linear_solver(LinearSolverKind kind) { kind_ = kind; }
  LinearSolverKind linear_solver() const { return kind_; }
  void set_cache_budget(long entries) { cache_budget_ = entries; }

  LevelSystems<Scalar> systems(const CoefficientField<Scalar>& q) const {
    return LevelSystems<Scalar>(space_, scheme_, q, kind_, cache_budget_);
  }

  Trajectory<Scalar> solve(const CoefficientField<Scalar>& q) const {
    auto sys = systems(q);
    return solve(q, sys);
  }

  Trajectory<Scalar> solve(const CoefficientField<Scalar>& q, LevelSystems<Scalar>& sys) const {
    require(q.feasible(), "solve_forward: coefficient violates its bounds");
    const int N = scheme_.N;
    Trajectory<Scalar> traj;
    traj.tau = scheme_.tau;
    traj.alpha = scheme_.alpha;
    traj.levels.resize(space_.n_interior(), N + 1);
    traj.levels.col(0) = initial_;
    const auto& b = scheme_.weights;
    Vector<Scalar> history(space_.n_interior());
    for (int n = 1; n <= N; ++n) {
      // sum_{i=0}^{n-1} b_{n-i} U^i
      history.noalias() = traj.levels.leftCols(n) * b.segment(1, n).reverse();
      history -= scheme_.partial_sums(n) * initial_;
      const Vector<Scalar> rhs = loads_.col(n - 1) - scheme_.tau_pow * (space_.mass_interior() * history);
      traj.levels.col(n) = sys.solve(n, rhs);
    }
    return traj;
  }

 private:
  FemSpace<Scalar> space_;
  CQScheme<Scalar> scheme_;
  Vector<Scalar> initial_;
  Matrix<Scalar> loads_;
  LinearSolverKind kind_ = LinearSolverKind::Cholesky;
  long cache_budget_ = 20'000'000;
};

/// (1/2) tau sum_{n=1}^N (U^n - z_n)^T M_int (U^n - z_n); column n-1 of `observations` holds z_n.
template <typename Scalar>
Scalar evaluate_state_misfit(const FemSpace<Scalar>& space, const Trajectory<Scalar>& traj,
                             const Matrix<Scalar>& observations) {
  require(observations.rows() == traj.levels.rows() && observations.cols() == traj.num_steps(),
          "evaluate_state_misfit: shape mismatch");
  require(observations.rows() == space.n_interior(), "evaluate_state_misfit: observation size mismatch");
  const Matrix<Scalar> r = traj.levels.rightCols(traj.num_steps()) - observations;
  const Matrix<Scalar> Mr = space.mass_interior() * r;
  return Scalar(0.5) * traj.tau * (r.array() * Mr.array()).sum();
}

}  // namespace fracinv
