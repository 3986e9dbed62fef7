#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fracinv/adjoint.hpp"
#include "fracinv/errors.hpp"

namespace fracinv {

enum class CGVariant { PolakRibierePlus, FletcherReeves, SteepestDescent };
enum class Termination { MaxIterations, GradientTolerance, LineSearchFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::MaxIterations: return "max-iters";
    case Termination::GradientTolerance: return "gradient-tol";
    case Termination::LineSearchFailure: return "line-search-failure";
  }
  return "unknown";
}

struct LineSearchConfig {
  double initial_step = 0.1;  // first trial moves q by at most this fraction of (c1 - c0)
  double shrink = 0.5;        // upper bound on the backtracking contraction
  double sufficient_decrease = 1e-4;
  int max_backtracks = 30;
};

/// Inner product used to turn the nodal gradient into a search direction:
///   <a, b> = tau sum_n (a^n)^T (M + lx^2 K) b^n + lt^2 tau sum_n (da^n)^T (M + lx^2 K) (db^n),
/// with d the backward difference quotient in time. Both lengths zero gives
/// the l2(L2) product with lumped mass.
struct MetricConfig {
  double time_length = 0.0;
  double space_length = 0.0;
};

struct OptimizerConfig {
  int max_iters = 100;
  double gradient_tolerance = 1e-8;
  LineSearchConfig line_search;
  CGVariant cg_variant = CGVariant::PolakRibierePlus;
  int restart_period = 10;
  MetricConfig metric;
  /// Optional starting guess; defaults to the constant (c0 + c1)/2.
  std::optional<Matrix<double>> initial_guess;
  bool verbose = false;

  void validate() const {
    require(max_iters >= 0, "OptimizerConfig: max_iters must be nonnegative");
    require(line_search.shrink > 0.0 && line_search.shrink < 1.0, "OptimizerConfig: shrink must lie in (0,1)");
    require(line_search.initial_step > 0.0, "OptimizerConfig: initial_step must be positive");
    require(restart_period >= 1, "OptimizerConfig: restart_period must be positive");
  }
};

template <typename Scalar = double>
struct InversionResult {
  CoefficientField<Scalar> q_star;
  Trajectory<Scalar> trajectory;  // state at q_star
  std::vector<Scalar> objective_history;
  std::vector<Scalar> gradient_history;  // relative gradient norm per iterate
  int iterations_used = 0;
  int evaluations = 0;
  Termination termination = Termination::MaxIterations;
};

/// Componentwise clamp of every level to [c0, c1].
template <typename Scalar>
CoefficientField<Scalar> project_box(const CoefficientField<Scalar>& q, Scalar c0, Scalar c1) {
  require(c0 < c1, "project_box: requires c0 < c1");
  CoefficientField<Scalar> out = q;
  out.c0 = c0;
  out.c1 = c1;
  out.levels = q.levels.cwiseMax(c0).cwiseMin(c1);
  return out;
}

namespace detail {

/// Riesz map of a MetricConfig: r = G^{-1} g, G = tau (I + c D_t) (x) S with
/// D_t the Neumann second difference over levels and S the spatial Gram matrix.
template <typename Scalar>
class RieszMap {
 public:
  RieszMap(const FemSpace<Scalar>& space, Scalar tau, int N, const MetricConfig& metric)
      : tau_(tau), N_(N), lumped_(space.lumped_mass()) {
    coupling_ = Scalar(metric.time_length * metric.time_length) / (tau * tau);
    if (metric.space_length > 0) {
      const Scalar l2 = Scalar(metric.space_length * metric.space_length);
      SparseMatrix<Scalar> S = space.mass_full() + l2 * space.stiffness_unit_full();
      spatial_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix<Scalar>>>(S);
      gram_ = S;
    } else {
      gram_ = SparseMatrix<Scalar>(lumped_.asDiagonal());
    }
  }

  Matrix<Scalar> apply_inverse(const Matrix<Scalar>& g) const {
    Matrix<Scalar> r = spatial_ ? Matrix<Scalar>(spatial_->solve(g)) : Matrix<Scalar>(lumped_.cwiseInverse().asDiagonal() * g);
    r /= tau_;
    if (coupling_ > 0 && N_ > 1) solve_time(r);
    return r;
  }

  /// <a, b> in the metric.
  Scalar inner(const Matrix<Scalar>& a, const Matrix<Scalar>& b) const {
    const Matrix<Scalar> Sb = gram_ * b;
    Scalar v = (a.array() * Sb.array()).sum();
    if (coupling_ > 0 && N_ > 1) {
      const Matrix<Scalar> da = a.rightCols(N_ - 1) - a.leftCols(N_ - 1);
      const Matrix<Scalar> dSb = Sb.rightCols(N_ - 1) - Sb.leftCols(N_ - 1);
      v += coupling_ * (da.array() * dSb.array()).sum();
    }
    return tau_ * v;
  }

 private:
  // (I + c D_t) x = y along each row (node), Thomas algorithm; diagonal
  // entries are 1 + c (ends) and 1 + 2c (interior), off-diagonals -c.
  void solve_time(Matrix<Scalar>& y) const {
    const Scalar c = coupling_;
    Vector<Scalar> cp(N_);
    Vector<Scalar> diag(N_);
    for (int n = 0; n < N_; ++n) diag(n) = Scalar(1) + ((n == 0 || n == N_ - 1) ? c : Scalar(2) * c);
    cp(0) = -c / diag(0);
    Vector<Scalar> denom(N_);
    denom(0) = diag(0);
    for (int n = 1; n < N_; ++n) {
      denom(n) = diag(n) + c * cp(n - 1);
      cp(n) = -c / denom(n);
    }
    for (Eigen::Index k = 0; k < y.rows(); ++k) {
      y(k, 0) /= denom(0);
      for (int n = 1; n < N_; ++n) y(k, n) = (y(k, n) + c * y(k, n - 1)) / denom(n);
      for (int n = N_ - 2; n >= 0; --n) y(k, n) -= cp(n) * y(k, n + 1);
    }
  }

  Scalar tau_;
  int N_;
  Scalar coupling_ = 0;
  Vector<Scalar> lumped_;
  SparseMatrix<Scalar> gram_;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix<Scalar>>> spatial_;
};

/// Zeroes gradient components that push against an active bound.
template <typename Scalar>
Matrix<Scalar> projected_gradient(const Matrix<Scalar>& g, const CoefficientField<Scalar>& q) {
  Matrix<Scalar> pg = g;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const Scalar v = q.levels.data()[k];
    if ((v <= q.c0 && g.data()[k] > 0) || (v >= q.c1 && g.data()[k] < 0)) pg.data()[k] = 0;
  }
  return pg;
}

}  // namespace detail

/// Projected nonlinear conjugate gradient on the box [c0, c1].
///
/// Directions are built from the Riesz representative of the gradient in the
/// discrete l2(L2) inner product with lumped mass, so the iteration behaves
/// consistently across mesh sizes. Every trial point is q(s) = clamp(q + s d)
/// and is accepted under the Armijo rule measured along the projected path.
template <typename Scalar>
InversionResult<Scalar> invert(const DiscreteObjective<Scalar>& objective, Scalar c0, Scalar c1,
                               const OptimizerConfig& config) {
  config.validate();
  require(c0 < c1, "invert: requires c0 < c1");
  const auto& solver = objective.solver();
  const auto& space = solver.space();
  const int N = solver.scheme().N;
  const Scalar tau = solver.scheme().tau;
  const int nf = space.n_full();

  CoefficientField<Scalar> q;
  q.c0 = c0;
  q.c1 = c1;
  if (config.initial_guess) {
    require(config.initial_guess->rows() == nf && config.initial_guess->cols() == N,
            "invert: initial guess must be shaped n_full x N");
    q.levels = config.initial_guess->template cast<Scalar>();
  } else {
    q.levels = Matrix<Scalar>::Constant(nf, N, Scalar(0.5) * (c0 + c1));
  }
  q = project_box(q, c0, c1);

  const detail::RieszMap<Scalar> metric(space, tau, N, config.metric);
  auto riesz = [&](const Matrix<Scalar>& g) -> Matrix<Scalar> { return metric.apply_inverse(g); };
  auto inner_w = [&](const Matrix<Scalar>& a, const Matrix<Scalar>& b) -> Scalar { return metric.inner(a, b); };
  auto dot = [](const Matrix<Scalar>& a, const Matrix<Scalar>& b) -> Scalar { return (a.array() * b.array()).sum(); };

  // Scale for the dimensionless gradient measure: data energy (1/2)||z||^2.
  const Matrix<Scalar>& z = objective.observations();
  const Scalar data_energy = Scalar(0.5) * tau * (z.array() * (space.mass_interior() * z).array()).sum();

  InversionResult<Scalar> result;
  auto ev = objective.evaluate(q);
  Matrix<Scalar> g = objective.gradient(q, ev);
  result.evaluations = 1;
  result.objective_history.push_back(ev.value);

  auto relative_gradient = [&](const Matrix<Scalar>& pg, const CoefficientField<Scalar>& at) {
    using std::sqrt;
    const Scalar dual = sqrt(dot(pg, riesz(pg)));
    const Scalar primal = sqrt(inner_w(at.levels, at.levels));
    const Scalar scale = std::max(data_energy + ev.penalty, std::numeric_limits<Scalar>::min());
    return dual * primal / scale;
  };

  Matrix<Scalar> pg = detail::projected_gradient(g, q);
  Matrix<Scalar> r = riesz(pg);
  Matrix<Scalar> d = -r;
  Matrix<Scalar> r_prev, q_prev;
  Scalar step_prev = 0;
  result.gradient_history.push_back(relative_gradient(pg, q));
  result.termination = Termination::MaxIterations;

  int it = 0;
  for (; it < config.max_iters; ++it) {
    if (result.gradient_history.back() < config.gradient_tolerance) {
      result.termination = Termination::GradientTolerance;
      break;
    }
    Scalar slope = dot(g, d);
    if (!(slope < 0)) {
      d = -r;
      slope = dot(g, d);
      if (!(slope < 0)) {
        result.termination = Termination::GradientTolerance;
        break;
      }
    }

    // Initial trial: bound-scaled on the first iteration, Barzilai-Borwein afterwards.
    Scalar s = 0;
    if (it > 0) {
      const Matrix<Scalar> dq = q.levels - q_prev;
      const Scalar denom = inner_w(dq, r - r_prev);
      if (denom > 0) s = inner_w(dq, dq) / denom * (inner_w(r, r) / -inner_w(r, d));
      if (!(s > 0) || !std::isfinite(static_cast<double>(s))) s = step_prev;
    }
    if (!(s > 0)) s = Scalar(config.line_search.initial_step) * (c1 - c0) / d.cwiseAbs().maxCoeff();

    auto trial_point = [&](Scalar step) {
      CoefficientField<Scalar> t = q;
      t.levels = (q.levels + step * d).cwiseMax(c0).cwiseMin(c1);
      return t;
    };

    bool accepted = false;
    CoefficientField<Scalar> q_new;
    Evaluation<Scalar> ev_new;
    for (int bt = 0; bt <= config.line_search.max_backtracks; ++bt) {
      CoefficientField<Scalar> qt = trial_point(s);
      auto evt = objective.evaluate(qt);
      ++result.evaluations;
      const Scalar predicted = dot(g, qt.levels - q.levels);
      if (evt.value <= ev.value + Scalar(config.line_search.sufficient_decrease) * predicted) {
        q_new = std::move(qt);
        ev_new = std::move(evt);
        accepted = true;
        // Quadratic model along the ray; try the extrapolated minimizer once.
        const Scalar denom = ev_new.value - ev.value - slope * s;
        if (denom > 0) {
          Scalar s_q = -slope * s * s / (Scalar(2) * denom);
          s_q = std::min(s_q, Scalar(10) * s);
          if (s_q > Scalar(1.5) * s) {
            CoefficientField<Scalar> qx = trial_point(s_q);
            auto evx = objective.evaluate(qx);
            ++result.evaluations;
            if (evx.value < ev_new.value) {
              q_new = std::move(qx);
              ev_new = std::move(evx);
              s = s_q;
            }
          }
        }
        break;
      }
      // Backtrack to the safeguarded minimizer of the quadratic interpolant.
      const Scalar denom = evt.value - ev.value - slope * s;
      Scalar s_q = denom > 0 ? -slope * s * s / (Scalar(2) * denom) : Scalar(config.line_search.shrink) * s;
      s = std::clamp(s_q, Scalar(0.1) * s, Scalar(config.line_search.shrink) * s);
    }
    if (!accepted) {
      result.termination = Termination::LineSearchFailure;
      break;
    }

    q_prev = q.levels;
    r_prev = r;
    step_prev = s;
    q = std::move(q_new);
    ev = std::move(ev_new);
    g = objective.gradient(q, ev);
    pg = detail::projected_gradient(g, q);
    r = riesz(pg);
    result.objective_history.push_back(ev.value);
    result.gradient_history.push_back(relative_gradient(pg, q));

    Scalar beta = 0;
    const bool restart = ((it + 1) % config.restart_period) == 0;
    if (!restart) {
      const Matrix<Scalar> pr_prev = r_prev;
      const Scalar norm_prev = inner_w(pr_prev, pr_prev);
      if (norm_prev > 0) {
        switch (config.cg_variant) {
          case CGVariant::PolakRibierePlus:
            beta = std::max(Scalar(0), inner_w(r, r - r_prev) / norm_prev);
            break;
          case CGVariant::FletcherReeves:
            beta = inner_w(r, r) / norm_prev;
            break;
          case CGVariant::SteepestDescent:
            beta = 0;
            break;
        }
      }
    }
    d = -r + beta * d;
    // Drop components that would immediately leave the box.
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      const Scalar v = q.levels.data()[k];
      if ((v <= c0 && d.data()[k] < 0) || (v >= c1 && d.data()[k] > 0)) d.data()[k] = 0;
    }
    if (config.verbose) {
      std::fprintf(stderr, "  iter %3d  J=%.6e  misfit=%.6e  rel|g|=%.3e  step=%.3e\n", it + 1,
                   static_cast<double>(ev.value), static_cast<double>(ev.misfit),
                   static_cast<double>(result.gradient_history.back()), static_cast<double>(s));
    }
  }
  result.iterations_used = it;
  result.q_star = std::move(q);
  result.trajectory = std::move(ev.trajectory);
  return result;
}

}  // namespace fracinv
