#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "fracinv/adjoint.hpp"

using namespace fracinv;

namespace {

template <typename S = double>
struct Setup {
  FemSpace<S> space;
  CQScheme<S> scheme;
  ForwardSolver<S> solver;
  Matrix<S> z;

  Setup(int M, int N, double alpha, double T)
      : space(build_interval_mesh<S>(M)),
        scheme(S(alpha), S(T), N),
        solver(space, scheme,
               ProblemData<S>{[](const Point<S>& x) { return x.x() * (1 - x.x()); },
                              [](const Point<S>& x, S t) { return x.x() * t; }}) {
    using std::exp;
    using std::sin;
    const auto qt = CoefficientField<S>::sample(
        space.mesh(), scheme, [](const Point<S>& x, S t) { return 2 + sin(S(M_PI) * x.x()) * exp(S(-0.1) * t); },
        S(0.5), S(5));
    z = solver.solve(qt).levels.rightCols(N);
  }

  CoefficientField<S> trial() const {
    using std::sin;
    auto q = CoefficientField<S>::constant(space.n_full(), scheme.N, S(2.75), S(0.5), S(5));
    for (int n = 0; n < scheme.N; ++n)
      for (int k = 0; k < space.n_full(); ++k) q.levels(k, n) += S(0.4) * sin(2 * space.mesh().nodes(k, 0) + S(0.3) * n);
    return q;
  }
};

template <typename S>
Matrix<S> direction(const CoefficientField<S>& q) {
  using std::cos;
  Matrix<S> d(q.levels.rows(), q.levels.cols());
  for (Eigen::Index n = 0; n < d.cols(); ++n)
    for (Eigen::Index k = 0; k < d.rows(); ++k) d(k, n) = cos(S(1) + S(0.7) * k - S(0.2) * n);
  return d;
}

}  // namespace

TEST_CASE("zero residual gives a zero adjoint and gradient") {
  Setup<> s(6, 5, 0.5, 1.0);
  const auto q = s.trial();
  const auto traj = s.solver.solve(q);
  const auto adj = solve_adjoint(s.solver, q, traj, traj.levels.rightCols(5).eval());
  CHECK(adj.levels.isZero(0));
  CHECK(assemble_gradient(s.space, s.scheme, q, traj, adj, 0.0).isZero(0));
}

TEST_CASE("single step adjoint equals the dense transpose") {
  Setup<> s(5, 1, 0.4, 0.2);
  const auto q = s.trial();
  const auto traj = s.solver.solve(q);
  const auto adj = solve_adjoint(s.solver, q, traj, s.z);
  const Eigen::MatrixXd S(s.space.system_matrix(q.levels.col(0), s.scheme.tau_pow));
  const Eigen::MatrixXd Mi(s.space.mass_interior());
  const Eigen::VectorXd r = traj.levels.col(1) - s.z.col(0);
  const Eigen::VectorXd P = -S.ldlt().solve(s.scheme.tau * (Mi * r));
  CHECK((adj.levels.col(0) - P).norm() <= 1e-12 * P.norm());

  // dJ/dq_k = P^T (dA/dq_k) U, with dA/dq_k the stiffness of the k-th hat restricted to the interior.
  const Eigen::MatrixXd g = assemble_gradient(s.space, s.scheme, q, traj, adj, 0.0);
  const auto& idx = s.space.dofs().interior_of_full;
  for (int k = 0; k < s.space.n_full(); ++k) {
    Eigen::VectorXd ek = Eigen::VectorXd::Zero(s.space.n_full());
    ek(k) = 1;
    const Eigen::MatrixXd Ak(s.space.assemble_stiffness_full(ek));
    Eigen::MatrixXd Aki(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) Aki(i, j) = Ak(idx[i], idx[j]);
    const double oracle = P.dot(Aki * traj.levels.col(1));
    CHECK(g(k, 0) == doctest::Approx(oracle).epsilon(1e-11).scale(1e-14));
  }
}

TEST_CASE("gradient matches central differences on the tiny instance") {
  Setup<> s(4, 3, 0.5, 1.0);
  DiscreteObjective<double> J(s.solver, s.z, 0.0);
  const auto q = s.trial();
  const auto rows = gradient_check(J, q, direction(q), {1e-6});
  CHECK(rows[0].relative_error <= 1e-6);
}

TEST_CASE("gradient matches central differences at coarse scale with regularization") {
  Setup<> s(10, 10, 0.5, 0.1);
  DiscreteObjective<double> J(s.solver, s.z, 1e-8);
  const auto q = s.trial();
  const auto rows = gradient_check(J, q, direction(q), {1e-4, 1e-5, 1e-6});
  for (const auto& r : rows) CHECK(r.relative_error <= 1e-5);
}

TEST_CASE("extended precision exposes the quadratic truncation error") {
  Setup<long double> s(6, 5, 0.5, 1.0);
  DiscreteObjective<long double> J(s.solver, s.z, 1e-8L);
  const auto q = s.trial();
  const auto rows = gradient_check(J, q, direction(q), {1e-2, 1e-3, 1e-4});
  for (int i = 0; i + 1 < 3; ++i)
    CHECK(std::log10(rows[i].directional_error / rows[i + 1].directional_error) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("regularization gradient") {
  FemSpace<double> space(build_square_mesh<double>(3));
  const auto c = CoefficientField<double>::constant(space.n_full(), 4, 1.7, 0.5, 5.0);
  CHECK(regularization_gradient(space, 0.25, c, 3.0).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(std::abs(regularization_value(space, 0.25, c, 3.0)) <= 1e-13);

  auto q = c;
  for (int n = 0; n < 4; ++n)
    for (int k = 0; k < space.n_full(); ++k) q.levels(k, n) += std::sin(0.9 * k + n);
  const Matrix<double> g = regularization_gradient(space, 0.25, q, 3.0);
  // The penalty is quadratic, so central differences are exact up to roundoff.
  const double h = 1e-3;
  double worst = 0;
  for (Eigen::Index k = 0; k < q.levels.size(); ++k) {
    auto p = q, m = q;
    p.levels(k) += h;
    m.levels(k) -= h;
    const double fd = (regularization_value(space, 0.25, p, 3.0) - regularization_value(space, 0.25, m, 3.0)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g(k)));
  }
  CHECK(worst <= 1e-9 * g.cwiseAbs().maxCoeff());
}

TEST_CASE("objective pieces") {
  Setup<> s(6, 4, 0.6, 1.0);
  DiscreteObjective<double> J(s.solver, s.z, 1e-3);
  const auto q = s.trial();
  const auto ev = J.evaluate(q);
  CHECK(ev.value == doctest::Approx(ev.misfit + ev.penalty));
  CHECK(ev.misfit == doctest::Approx(evaluate_state_misfit(s.space, ev.trajectory, s.z)));
  CHECK(ev.penalty == doctest::Approx(regularization_value(s.space, s.scheme.tau, q, 1e-3)));
  CHECK_THROWS_AS(DiscreteObjective<double>(s.solver, s.z, -1.0), std::invalid_argument);
}
