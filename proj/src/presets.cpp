#include "fracinv/presets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "fracinv/errors.hpp"

namespace fracinv {

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::vector<double> kLadder = {5e-2, 3e-2, 1e-2, 5e-3, 3e-3, 1e-3};

// Mesh sizes used for the tabulated noise levels; h shrinks like sqrt(epsilon).
std::function<GridChoice(double)> interval_grid(int fine_M, int N) {
  const std::map<double, int> table = {{5e-2, 10}, {3e-2, 12}, {1e-2, 20}, {5e-3, 30}, {3e-3, 40}, {1e-3, 80}};
  return [table, fine_M, N](double eps) {
    for (const auto& [e, M] : table)
      if (std::abs(e - eps) <= 1e-12 * eps) return GridChoice{M, N};
    return GridChoice{snap_mesh_size(eps, fine_M), N};
  };
}

Preset interval_preset(std::string name, SpaceTimeFunction<double> q, std::vector<double> gammas, double ratio) {
  Preset p;
  p.name = std::move(name);
  p.dim = 1;
  p.T = 0.1;
  p.u0 = [](const Point<double>& x) { return x.x() * (1.0 - x.x()); };
  p.f = [](const Point<double>&, double) { return 0.0; };
  p.q_true = std::move(q);
  p.alphas = {0.25, 0.5, 0.75};
  p.epsilons = kLadder;
  p.gammas = std::move(gammas);
  p.gamma_ratio = ratio;
  p.fine_M = 960;
  p.fine_N = 1000;
  p.grid_rule = interval_grid(p.fine_M, 1000);
  p.metric.time_length = 1.0;
  p.metric.space_length = 0.2;
  p.snapshot_times = {0.05, 0.1};
  return p;
}

}  // namespace

int snap_mesh_size(double epsilon, int fine_M, double c) {
  require(epsilon > 0 && fine_M >= 2, "snap_mesh_size: invalid arguments");
  const double target = c / std::sqrt(epsilon);
  int best = fine_M;
  double best_gap = 1e300;
  for (int d = 2; d <= fine_M; ++d) {
    if (fine_M % d) continue;
    const double gap = std::abs(std::log(d / target));
    if (gap < best_gap) best = d, best_gap = gap;
  }
  return best;
}

Preset example1() {
  return interval_preset(
      "example1", [](const Point<double>& x, double t) { return 2.0 + std::sin(kPi * x.x()) * std::exp(-0.1 * t); },
      {5.00e-10, 1.80e-10, 2.00e-11, 5.00e-12, 1.80e-12, 2.00e-13}, 2e-7);
}

Preset example2() {
  return interval_preset(
      "example2", [](const Point<double>& x, double t) { return 2.0 + std::min(x.x(), 1.0 - x.x()) * (1.0 - t); },
      {1.00e-9, 3.60e-10, 4.00e-11, 1.00e-11, 3.60e-12, 4.00e-13}, 4e-7);
}

Preset example3() {
  Preset p;
  p.name = "example3";
  p.dim = 2;
  p.T = 1.0;
  p.u0 = [](const Point<double>& x) { return x.x() * (1.0 - x.x()) * std::sin(kPi * x.y()); };
  p.f = [](const Point<double>& x, double t) { return std::sin(kPi * x.x()) * std::sin(kPi * x.y()) * (1.0 + t); };
  p.q_true = [](const Point<double>& x, double) { return 1.0 + std::sin(kPi * x.x()) * x.y() * (1.0 - x.y()); };
  p.alphas = {0.5};
  p.epsilons = {1e-2, 5e-2};
  p.gamma_ratio = 2e-7;
  p.gammas = {p.gamma_ratio * 1e-4, p.gamma_ratio * 25e-4};
  p.fine_M = 80;
  p.fine_N = 500;
  p.grid_rule = [](double) { return GridChoice{40, 500}; };
  p.metric.time_length = 1.0;
  p.metric.space_length = 0.2;
  p.snapshot_times = {0.5};
  return p;
}

ForwardProblem positivity_dataset(double alpha, double T) {
  ForwardProblem p;
  p.dim = 1;
  p.alpha = alpha;
  p.T = T;
  p.u0 = [](const Point<double>& x) { return x.x() * (1.0 - x.x()); };
  p.f = [](const Point<double>&, double) { return 1.0; };
  p.q = [](const Point<double>&, double) { return 1.0; };
  return p;
}

ForwardProblem smooth_forward_problem(double alpha, double T) {
  ForwardProblem p;
  p.dim = 1;
  p.alpha = alpha;
  p.T = T;
  p.u0 = [](const Point<double>& x) { return std::sin(kPi * x.x()); };
  p.f = [](const Point<double>& x, double t) { return x.x() * (1.0 - x.x()) * (1.0 + t); };
  p.q = [](const Point<double>& x, double) { return 1.0 + 0.5 * x.x(); };
  return p;
}

std::vector<std::string> preset_names() { return {"example1", "example2", "example3"}; }

Preset preset_by_name(const std::string& name) {
  if (name == "example1") return example1();
  if (name == "example2") return example2();
  if (name == "example3") return example3();
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace fracinv
