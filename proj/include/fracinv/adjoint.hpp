#pragma once

#include <Eigen/Core>

#include <memory>
#include <vector>

#include "fracinv/errors.hpp"
#include "fracinv/forward.hpp"

namespace fracinv {

/// P^1..P^N on interior nodes; column m-1 holds P^m.
template <typename Scalar = double>
struct AdjointTrajectory {
  Matrix<Scalar> levels;
};

/// Discrete adjoint of the fully discrete scheme, swept from m = N down to 1:
///   (tau^-a M + A(q^m)) P^m = -tau M (U^m - z_m) - tau^-a M sum_{n>m} b_{n-m} P^n.
template <typename Scalar>
AdjointTrajectory<Scalar> solve_adjoint(const ForwardSolver<Scalar>& solver, LevelSystems<Scalar>& systems,
                                        const Trajectory<Scalar>& traj, const Matrix<Scalar>& observations) {
  const auto& space = solver.space();
  const auto& scheme = solver.scheme();
  const int N = scheme.N;
  require(traj.num_steps() == N, "solve_adjoint: trajectory length mismatch");
  require(observations.rows() == space.n_interior() && observations.cols() == N,
          "solve_adjoint: observation shape mismatch");
  AdjointTrajectory<Scalar> adj;
  adj.levels.setZero(space.n_interior(), N);
  const auto& b = scheme.weights;
  const auto& M = space.mass_interior();
  Vector<Scalar> rhs(space.n_interior());
  for (int m = N; m >= 1; --m) {
    rhs.noalias() = -scheme.tau * (M * (traj.levels.col(m) - observations.col(m - 1)));
    if (m < N) {
      const Vector<Scalar> hist = adj.levels.middleCols(m, N - m) * b.segment(1, N - m);
      rhs.noalias() -= scheme.tau_pow * (M * hist);
    }
    if (rhs.isZero(0)) continue;  // exact zero: P^m = 0
    adj.levels.col(m - 1) = systems.solve(m, rhs);
  }
  return adj;
}

template <typename Scalar>
AdjointTrajectory<Scalar> solve_adjoint(const ForwardSolver<Scalar>& solver, const CoefficientField<Scalar>& q,
                                        const Trajectory<Scalar>& traj, const Matrix<Scalar>& observations) {
  auto sys = solver.systems(q);
  return solve_adjoint(solver, sys, traj, observations);
}

/// Space-time H^1 seminorm penalty
///   (gamma/2) [ tau sum_{n=1}^N |grad q^n|^2 + tau sum_{n=2}^N |(q^n - q^{n-1})/tau|^2 ].
template <typename Scalar>
Scalar regularization_value(const FemSpace<Scalar>& space, Scalar tau, const CoefficientField<Scalar>& q,
                            Scalar gamma) {
  if (gamma == Scalar(0)) return Scalar(0);
  const Matrix<Scalar>& Q = q.levels;
  const Matrix<Scalar> KQ = space.stiffness_unit_full() * Q;
  Scalar spatial = (Q.array() * KQ.array()).sum();
  Scalar temporal = 0;
  if (Q.cols() > 1) {
    const Matrix<Scalar> D = Q.rightCols(Q.cols() - 1) - Q.leftCols(Q.cols() - 1);
    const Matrix<Scalar> MD = space.mass_full() * D;
    temporal = (D.array() * MD.array()).sum();
  }
  return Scalar(0.5) * gamma * (tau * spatial + temporal / tau);
}

template <typename Scalar>
Matrix<Scalar> regularization_gradient(const FemSpace<Scalar>& space, Scalar tau, const CoefficientField<Scalar>& q,
                                       Scalar gamma) {
  const Matrix<Scalar>& Q = q.levels;
  Matrix<Scalar> g = Matrix<Scalar>::Zero(Q.rows(), Q.cols());
  if (gamma == Scalar(0)) return g;
  g = (gamma * tau) * (space.stiffness_unit_full() * Q);
  const int N = static_cast<int>(Q.cols());
  if (N > 1) {
    // Second difference in time, one-sided at n = 1 and n = N.
    Matrix<Scalar> S = Matrix<Scalar>::Zero(Q.rows(), N);
    const Matrix<Scalar> D = Q.rightCols(N - 1) - Q.leftCols(N - 1);  // column n-1: q^{n+1} - q^n
    S.rightCols(N - 1) += D;
    S.leftCols(N - 1) -= D;
    g += (gamma / tau) * (space.mass_full() * S);
  }
  return g;
}

/// dJ/dq^n_k = int psi_k grad U^n . grad P^n + regularization gradient, full nodes.
template <typename Scalar>
Matrix<Scalar> assemble_gradient(const FemSpace<Scalar>& space, const CQScheme<Scalar>& scheme,
                                 const CoefficientField<Scalar>& q, const Trajectory<Scalar>& traj,
                                 const AdjointTrajectory<Scalar>& adj, Scalar gamma) {
  const int N = scheme.N;
  require(q.num_levels() == N && traj.num_steps() == N && adj.levels.cols() == N,
          "assemble_gradient: shape mismatch");
  require(gamma >= Scalar(0), "assemble_gradient: gamma must be nonnegative");
  Matrix<Scalar> g = regularization_gradient(space, scheme.tau, q, gamma);
  const auto& dofs = space.dofs();
  for (int n = 1; n <= N; ++n) {
    if (adj.levels.col(n - 1).isZero(0)) continue;
    const Vector<Scalar> u = dofs.template to_full<Scalar>(traj.levels.col(n));
    const Vector<Scalar> p = dofs.template to_full<Scalar>(adj.levels.col(n - 1));
    space.accumulate_gradient_kernel(u, p, g.col(n - 1));
  }
  return g;
}

/// Value of J_{gamma,h,tau} together with the state it was computed from.
template <typename Scalar = double>
struct Evaluation {
  Scalar value = 0;
  Scalar misfit = 0;
  Scalar penalty = 0;
  Trajectory<Scalar> trajectory;
  std::shared_ptr<LevelSystems<Scalar>> systems;  // factorizations used for the state
};

/// Regularized output least-squares objective on the discrete admissible set.
template <typename Scalar = double>
class DiscreteObjective {
 public:
  DiscreteObjective(const ForwardSolver<Scalar>& solver, Matrix<Scalar> observations, Scalar gamma)
      : solver_(solver), obs_(std::move(observations)), gamma_(gamma) {
    require(gamma >= Scalar(0), "DiscreteObjective: gamma must be nonnegative");
    require(obs_.rows() == solver_.space().n_interior() && obs_.cols() == solver_.scheme().N,
            "DiscreteObjective: observations must be shaped n_interior x N");
  }

  const ForwardSolver<Scalar>& solver() const { return solver_; }
  const Matrix<Scalar>& observations() const { return obs_; }
  Scalar gamma() const { return gamma_; }

  Evaluation<Scalar> evaluate(const CoefficientField<Scalar>& q) const {
    Evaluation<Scalar> ev;
    ev.systems = std::make_shared<LevelSystems<Scalar>>(solver_.systems(q));
    ev.trajectory = solver_.solve(q, *ev.systems);
    fill(q, ev);
    return ev;
  }

  /// Gradient at q given the matching evaluation (re-used state).
  Matrix<Scalar> gradient(const CoefficientField<Scalar>& q, const Evaluation<Scalar>& ev) const {
    auto sys = ev.systems ? ev.systems : std::make_shared<LevelSystems<Scalar>>(solver_.systems(q));
    const auto adj = solve_adjoint(solver_, *sys, ev.trajectory, obs_);
    return assemble_gradient(solver_.space(), solver_.scheme(), q, ev.trajectory, adj, gamma_);
  }

  Scalar value(const CoefficientField<Scalar>& q) const { return evaluate(q).value; }

 private:
  void fill(const CoefficientField<Scalar>& q, Evaluation<Scalar>& ev) const {
    ev.misfit = evaluate_state_misfit(solver_.space(), ev.trajectory, obs_);
    ev.penalty = regularization_value(solver_.space(), solver_.scheme().tau, q, gamma_);
    ev.value = ev.misfit + ev.penalty;
  }

  const ForwardSolver<Scalar>& solver_;
  Matrix<Scalar> obs_;
  Scalar gamma_;
};

struct GradientCheck {
  double step = 0;
  double relative_error = 0;     // ||g_fd - g|| / ||g|| over all components
  double directional_error = 0;  // |<g, d> - (J(q+sd) - J(q-sd)) / 2s|
};

/// Central finite differences of J against the adjoint gradient, one row per step size.
template <typename Scalar>
std::vector<GradientCheck> gradient_check(const DiscreteObjective<Scalar>& J, const CoefficientField<Scalar>& q,
                                          const Matrix<Scalar>& direction, const std::vector<double>& steps) {
  require(direction.rows() == q.levels.rows() && direction.cols() == q.levels.cols(),
          "gradient_check: direction shape mismatch");
  const auto ev = J.evaluate(q);
  const Matrix<Scalar> g = J.gradient(q, ev);
  const Scalar gd = (g.array() * direction.array()).sum();
  std::vector<GradientCheck> out;
  for (double step : steps) {
    require(step > 0, "gradient_check: steps must be positive");
    const Scalar s = static_cast<Scalar>(step);
    GradientCheck row;
    row.step = step;
    Matrix<Scalar> fd(g.rows(), g.cols());
    CoefficientField<Scalar> p = q;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const Scalar q0 = q.levels(k);
      p.levels(k) = q0 + s;
      const Scalar jp = J.value(p);
      p.levels(k) = q0 - s;
      const Scalar jm = J.value(p);
      p.levels(k) = q0;
      fd(k) = (jp - jm) / (2 * s);
    }
    row.relative_error = static_cast<double>((fd - g).norm() / g.norm());
    CoefficientField<Scalar> a = q, b = q;
    a.levels += s * direction;
    b.levels -= s * direction;
    using std::abs;
    row.directional_error = static_cast<double>(abs(gd - (J.value(a) - J.value(b)) / (2 * s)));
    out.push_back(row);
  }
  return out;
}

}  // namespace fracinv
