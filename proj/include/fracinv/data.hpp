#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "fracinv/errors.hpp"
#include "fracinv/forward.hpp"

namespace fracinv {

/// Standard normal variates from mt19937_64 via the Box-Muller transform.
///
/// The transform is spelled out (rather than std::normal_distribution, whose
/// algorithm is implementation-defined) so a seed reproduces the same stream
/// with any standard library.
class GaussianStream {
 public:
  static constexpr const char* kName = "mt19937_64+box-muller";

  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    // u1 in (0, 1], u2 in [0, 1), both with 53 random bits.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(two_pi * u2);
    has_spare_ = true;
    return radius * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0;
  bool has_spare_ = false;
};

/// Fine-to-coarse transfer in space: nodal sampling (nested meshes), point
/// evaluation of the fine P1 field, or L2 projection of the fine P1 field onto
/// the coarse X_h (nested meshes, exact integration).
enum class SpatialTransfer { Nested, Interpolate, Project };

/// Coarse-step data: trapezoidal mean over the fine levels inside the step, or
/// the fine level at t_n itself.
enum class TimeTransfer { Average, Sample };

/// Noisy observations z_1..z_N on the inversion mesh interior nodes.
struct ObservationSet {
  Matrix<double> z;                 // n_interior x N, column n-1 holds z_n
  Matrix<double> reference;         // u(t_n) transferred to the inversion mesh, same shape
  double epsilon = 0;
  double noise_amplitude = 0;       // epsilon * max |u|
  double delta_estimate = 0;        // ||u(t_n) - z_n||_{l2(L2)}
  double reference_norm = 0;        // ||u(t_n)||_{l2(L2)}
  std::uint64_t rng_seed = 0;
};

/// Builds z_n = tau^-1 int_{t_{n-1}}^{t_n} z(t) dt from a fine reference trajectory.
///
/// Gaussian noise of amplitude epsilon * max|u| is added at every fine interior
/// node and fine level, the field is moved to the coarse mesh in space, and
/// the coarse-step time average is taken with the trapezoidal rule over the
/// fine levels inside each coarse step.
inline ObservationSet synthesize_observations(const FemSpace<double>& fine, const Trajectory<double>& reference,
                                              const FemSpace<double>& coarse, const CQScheme<double>& coarse_scheme,
                                              double epsilon, std::uint64_t seed,
                                              SpatialTransfer transfer = SpatialTransfer::Nested,
                                              TimeTransfer in_time = TimeTransfer::Average) {
  require(epsilon >= 0.0, "synthesize_observations: epsilon must be nonnegative");
  require(reference.levels.allFinite(), "synthesize_observations: reference trajectory is not finite");
  require(reference.levels.rows() == fine.n_interior(), "synthesize_observations: reference size mismatch");
  const int Nf = reference.num_steps();
  const int Nc = coarse_scheme.N;
  require(Nc >= 1 && Nf % Nc == 0, "synthesize_observations: coarse time grid must nest in the fine one");
  if (transfer != SpatialTransfer::Interpolate)
    require(nested(fine.mesh(), coarse.mesh()), "synthesize_observations: meshes are not nested");
  require(std::abs(reference.tau * Nf - coarse_scheme.final_time()) <= 1e-12 * coarse_scheme.final_time(),
          "synthesize_observations: final times differ");
  const int ratio = Nf / Nc;

  ObservationSet obs;
  obs.epsilon = epsilon;
  obs.rng_seed = seed;
  obs.noise_amplitude = epsilon * reference.levels.cwiseAbs().maxCoeff();

  GaussianStream noise(seed);
  const auto& fdofs = fine.dofs();
  const auto& cdofs = coarse.dofs();
  SparseMatrix<double> project_rows;  // (P^T M_fine) restricted to coarse interior rows
  if (transfer == SpatialTransfer::Project) {
    const SparseMatrix<double> P = prolongation(coarse.mesh(), fine.mesh());
    const SparseMatrix<double> PtM = SparseMatrix<double>(P.transpose()) * fine.mass_full();
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < PtM.outerSize(); ++k)
      for (SparseMatrix<double>::InnerIterator it(PtM, k); it; ++it)
        if (cdofs.full_to_interior[it.row()] >= 0) trip.emplace_back(cdofs.full_to_interior[it.row()], it.col(), it.value());
    project_rows.resize(coarse.n_interior(), fine.n_full());
    project_rows.setFromTriplets(trip.begin(), trip.end());
  }
  auto to_coarse = [&](const Vector<double>& fine_interior) -> Vector<double> {
    const Vector<double> full = fdofs.to_full<double>(fine_interior);
    if (transfer == SpatialTransfer::Project) return coarse.solve_interior_mass(project_rows * full);
    const Vector<double> c = transfer == SpatialTransfer::Nested
                                 ? restrict_to_coarse(fine.mesh(), coarse.mesh(), full)
                                 : interpolate_between(fine.mesh(), coarse.mesh(), full);
    return cdofs.to_interior<double>(c);
  };

  // Noisy fine levels moved to the coarse mesh, one column per fine level.
  Matrix<double> moved(coarse.n_interior(), Nf + 1);
  Vector<double> noisy(fine.n_interior());
  for (int m = 0; m <= Nf; ++m) {
    for (int i = 0; i < fine.n_interior(); ++i) noisy(i) = reference.levels(i, m) + obs.noise_amplitude * noise.next();
    moved.col(m) = to_coarse(noisy);
  }

  obs.z.resize(coarse.n_interior(), Nc);
  obs.reference.resize(coarse.n_interior(), Nc);
  for (int n = 1; n <= Nc; ++n) {
    const int first = (n - 1) * ratio, last = n * ratio;
    if (in_time == TimeTransfer::Average) {
      Vector<double> avg = 0.5 * (moved.col(first) + moved.col(last));
      for (int m = first + 1; m < last; ++m) avg += moved.col(m);
      obs.z.col(n - 1) = avg / static_cast<double>(ratio);
    } else {
      obs.z.col(n - 1) = moved.col(last);
    }
    obs.reference.col(n - 1) = to_coarse(reference.levels.col(last));
  }

  const double tau = coarse_scheme.tau;
  const Matrix<double> diff = obs.reference - obs.z;
  obs.delta_estimate = std::sqrt(tau * (diff.array() * (coarse.mass_interior() * diff).array()).sum());
  obs.reference_norm =
      std::sqrt(tau * (obs.reference.array() * (coarse.mass_interior() * obs.reference).array()).sum());
  return obs;
}

/// ||(q^n - I_h q(t_n))_{n=1}^N||_{l2(L2)} over full nodes.
inline double error_eq(const FemSpace<double>& space, const CQScheme<double>& scheme,
                       const CoefficientField<double>& q_star, const SpaceTimeFunction<double>& q_truth) {
  require(q_star.num_levels() == scheme.N && q_star.num_nodes() == space.n_full(), "error_eq: shape mismatch");
  const auto truth = CoefficientField<double>::sample(space.mesh(), scheme, q_truth, q_star.c0, q_star.c1);
  const Matrix<double> diff = q_star.levels - truth.levels;
  return std::sqrt(scheme.tau * (diff.array() * (space.mass_full() * diff).array()).sum());
}

/// ||(U^n - u(t_n))_{n=1}^N||_{l2(L2)} on interior nodes; `reference` column n-1 holds u(t_n).
inline double error_eu(const FemSpace<double>& space, const Trajectory<double>& traj,
                       const Matrix<double>& reference) {
  require(reference.rows() == space.n_interior() && reference.cols() == traj.num_steps(), "error_eu: shape mismatch");
  const Matrix<double> diff = traj.levels.rightCols(traj.num_steps()) - reference;
  return std::sqrt(traj.tau * (diff.array() * (space.mass_interior() * diff).array()).sum());
}

struct RateFit {
  std::vector<std::pair<double, double>> levels;
  double rate = 0;
  double intercept = 0;
  double residual = 0;  // root-mean-square log residual
};

/// Ordinary least squares of log(error) against log(delta).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 3, "fit_rate: need at least three points");
  for (const auto& [d, e] : points) require(d > 0.0 && e > 0.0, "fit_rate: values must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixX2d X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = std::log(points[i].first);
    X(i, 1) = 1.0;
    y(i) = std::log(points[i].second);
  }
  const Eigen::Vector2d coef = X.colPivHouseholderQr().solve(y);
  RateFit fit;
  fit.levels = points;
  fit.rate = coef(0);
  fit.intercept = coef(1);
  fit.residual = std::sqrt((X * coef - y).squaredNorm() / static_cast<double>(n));
  return fit;
}

}  // namespace fracinv
