#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fracinv/data.hpp"
#include "fracinv/diagnostics.hpp"
#include "fracinv/forward.hpp"
#include "fracinv/inverse.hpp"

namespace fracinv {

/// A reconstruction experiment: data, exact coefficient, and grids.
struct Preset {
  std::string name;
  int dim = 1;
  double T = 0.1;
  SpaceFunction<double> u0;
  SpaceTimeFunction<double> f;
  SpaceTimeFunction<double> q_true;
  double c0 = 0.5;
  double c1 = 5.0;
  std::vector<double> alphas;
  std::vector<double> epsilons;
  std::vector<double> gammas;  // paired with epsilons
  int fine_M = 0;
  int fine_N = 0;
  std::function<GridChoice(double epsilon)> grid_rule;
  SpatialTransfer spatial = SpatialTransfer::Project;
  TimeTransfer temporal = TimeTransfer::Sample;
  MetricConfig metric;
  int max_iters = 100;
  std::vector<double> snapshot_times;

  /// Regularization weight gamma = gamma_ratio * epsilon^2 for off-table levels.
  double gamma_ratio = 0;

  double gamma_for(double epsilon) const {
    for (std::size_t i = 0; i < epsilons.size(); ++i)
      if (std::abs(epsilons[i] - epsilon) <= 1e-12 * epsilon) return gammas[i];
    return gamma_ratio * epsilon * epsilon;
  }
};

/// Divisor of `fine_M` closest (in log scale) to c / sqrt(epsilon), at least 2.
int snap_mesh_size(double epsilon, int fine_M, double c = 2.2);

Preset example1();
Preset example2();
Preset example3();

/// q = 1, f = 1, u0 = x(1-x) on the unit interval: u >= 0 and d_t^alpha u <= 0.
ForwardProblem positivity_dataset(double alpha, double T = 1.0);

/// Smooth data with a time-independent coefficient for self-convergence studies.
ForwardProblem smooth_forward_problem(double alpha, double T = 1.0);

/// Looks up a preset by name; throws std::invalid_argument for unknown names.
Preset preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace fracinv
