#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "fracinv/cq.hpp"
#include "fracinv/fem.hpp"
#include "fracinv/forward.hpp"
#include "fracinv/mesh.hpp"

namespace fracinv {

struct PositivityOptions {
  std::vector<double> betas = {0.0, 1.0, 2.0};
  int first_level = 2;             // levels below this are left out of ratios and the Caputo sign check
  double sign_tolerance = 1e-8;
  double fit_band = 0.25;          // nodes with dist <= fit_band enter the beta regression
};

struct PositivityReport {
  Matrix<double> weight_field;     // interior nodes x levels 1..N
  Vector<double> distance;         // dist(x, boundary) at interior nodes
  std::vector<double> betas;
  std::vector<double> min_interior_ratio;
  double fitted_beta = 0;
  double fit_residual = 0;
  bool state_nonnegative = false;  // u >= -tol at every node and level
  bool caputo_nonpositive = false; // discrete Caputo derivative <= tol for levels >= first_level
  double min_state = 0;
  double max_caputo = 0;
};

/// Nodal |grad v|^2 as the measure-weighted mean of the adjacent element values.
inline Vector<double> nodal_gradient_sq(const FemSpace<double>& space, const Vector<double>& v_full) {
  const auto& mesh = space.mesh();
  const Vector<double> ge = space.element_gradient_sq(v_full);
  Vector<double> num = Vector<double>::Zero(mesh.num_nodes());
  Vector<double> den = Vector<double>::Zero(mesh.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double w = space.element_measure(e);
    for (int a = 0; a < mesh.vertices_per_element(); ++a) {
      num(mesh.elements(e, a)) += w * ge(e);
      den(mesh.elements(e, a)) += w;
    }
  }
  return num.cwiseQuotient(den);
}

/// Evaluates W = q|grad u|^2 + (f - d_t^alpha u) u at interior nodes and levels.
inline PositivityReport positivity_report(const FemSpace<double>& space, const CQScheme<double>& scheme,
                                          const CoefficientField<double>& q, const Trajectory<double>& traj,
                                          const SpaceTimeFunction<double>& f, const PositivityOptions& opt = {}) {
  const int N = scheme.N;
  const int ni = space.n_interior();
  require(traj.levels.rows() == ni && traj.num_steps() == N, "positivity_report: trajectory shape mismatch");
  require(q.levels.rows() == space.n_full() && q.levels.cols() == N, "positivity_report: coefficient shape mismatch");
  require(opt.first_level >= 1, "positivity_report: first_level must be at least 1");
  const auto& mesh = space.mesh();
  const auto& dofs = space.dofs();

  PositivityReport rep;
  rep.betas = opt.betas;
  rep.weight_field.resize(ni, N);
  rep.distance.resize(ni);
  for (int i = 0; i < ni; ++i) rep.distance(i) = boundary_distance(mesh, mesh.node(dofs.interior_of_full[i]));

  rep.min_state = traj.levels.size() ? traj.levels.minCoeff() : 0.0;
  rep.max_caputo = -std::numeric_limits<double>::infinity();
  for (int n = 1; n <= N; ++n) {
    const Vector<double> u_full = dofs.to_full<double>(traj.levels.col(n));
    const Vector<double> grad_sq = nodal_gradient_sq(space, u_full);
    const Vector<double> dtu = discrete_caputo(scheme, traj.levels, n);
    if (n >= opt.first_level) rep.max_caputo = std::max(rep.max_caputo, dtu.maxCoeff());
    const double t = scheme.time(n);
    for (int i = 0; i < ni; ++i) {
      const int k = dofs.interior_of_full[i];
      const double u = traj.levels(i, n);
      rep.weight_field(i, n - 1) = q.levels(k, n - 1) * grad_sq(k) + (f(mesh.node(k), t) - dtu(i)) * u;
    }
  }
  if (N < opt.first_level) rep.max_caputo = 0.0;
  require(rep.weight_field.allFinite(), "positivity_report: weight field is not finite");
  rep.state_nonnegative = rep.min_state >= -opt.sign_tolerance;
  rep.caputo_nonpositive = rep.max_caputo <= opt.sign_tolerance;

  for (double beta : opt.betas) {
    double m = std::numeric_limits<double>::infinity();
    for (int n = opt.first_level; n <= N; ++n)
      for (int i = 0; i < ni; ++i) m = std::min(m, rep.weight_field(i, n - 1) / std::pow(rep.distance(i), beta));
    rep.min_interior_ratio.push_back(std::isfinite(m) ? m : 0.0);
  }

  // log(min_n W) = log c + beta log dist over the nodes near the boundary
  std::vector<double> xs, ys;
  for (int i = 0; i < ni; ++i) {
    if (rep.distance(i) > opt.fit_band || opt.first_level > N) continue;
    const double w = rep.weight_field.row(i).segment(opt.first_level - 1, N - opt.first_level + 1).minCoeff();
    if (w <= 0) continue;
    xs.push_back(std::log(rep.distance(i)));
    ys.push_back(std::log(w));
  }
  if (xs.size() >= 2) {
    const int n = static_cast<int>(xs.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) mx += xs[i] / n, my += ys[i] / n;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) sxx += (xs[i] - mx) * (xs[i] - mx), sxy += (xs[i] - mx) * (ys[i] - my);
    if (sxx > 0) {
      rep.fitted_beta = sxy / sxx;
      double rss = 0;
      for (int i = 0; i < n; ++i) {
        const double r = ys[i] - my - rep.fitted_beta * (xs[i] - mx);
        rss += r * r;
      }
      rep.fit_residual = std::sqrt(rss / n);
    }
  }
  return rep;
}

/// A forward problem with a time-independent or time-dependent coefficient.
struct ForwardProblem {
  int dim = 1;
  double alpha = 0.5;
  double T = 1.0;
  SpaceFunction<double> u0;
  SpaceTimeFunction<double> f;
  SpaceTimeFunction<double> q;
};

struct ConvergenceRow {
  int M = 0;
  int N = 0;
  double h = 0;
  double tau = 0;
  double error = 0;
  double order = std::numeric_limits<double>::quiet_NaN();  // against the previous row
};

/// Which discretization parameter the ladder refines; the order is measured against it.
enum class Refinement { Time, Space, Both };

/// Self-convergence at t = T. Each ladder entry (M, N) is compared with the solution on
/// (space_factor*M, time_factor*N); the coarse solution is prolonged to the fine mesh.
inline std::vector<ConvergenceRow> convergence_study_forward(const ForwardProblem& prob,
                                                             const std::vector<GridChoice>& ladder,
                                                             Refinement kind, int space_factor = 4,
                                                             int time_factor = 4) {
  require(ladder.size() >= 3, "convergence_study_forward: need at least three levels");
  require(space_factor >= 1 && time_factor >= 1, "convergence_study_forward: invalid refinement factors");
  ProblemData<double> data{prob.u0, prob.f};
  auto final_state = [&](int M, int N) {
    Mesh<double> mesh = prob.dim == 1 ? build_interval_mesh<double>(M) : build_square_mesh<double>(M);
    FemSpace<double> space(mesh);
    CQScheme<double> scheme(prob.alpha, prob.T, N);
    ForwardSolver<double> solver(space, scheme, data);
    const auto q = CoefficientField<double>::sample(space.mesh(), scheme, prob.q, std::numeric_limits<double>::min(),
                                                          std::numeric_limits<double>::max());
    const auto traj = solver.solve(q);
    return std::pair{space, Vector<double>(space.dofs().to_full<double>(traj.levels.col(N)))};
  };
  std::vector<ConvergenceRow> rows;
  for (const auto& g : ladder) {
    const auto [coarse, uc] = final_state(g.M, g.N);
    const auto [fine, uf] = final_state(space_factor * g.M, time_factor * g.N);
    const Vector<double> up = space_factor == 1 ? uc : interpolate_between(coarse.mesh(), fine.mesh(), uc);
    ConvergenceRow r;
    r.M = g.M;
    r.N = g.N;
    r.h = 1.0 / g.M;
    r.tau = prob.T / g.N;
    r.error = l2_norm(fine, Vector<double>(up - uf));
    if (!rows.empty()) {
      const auto& p = rows.back();
      const double ratio = kind == Refinement::Space ? p.h / r.h : p.tau / r.tau;
      r.order = std::log(p.error / r.error) / std::log(ratio);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fracinv
