#pragma once

#include <Eigen/Core>

#include <cmath>

#include "fracinv/errors.hpp"

namespace fracinv {

/// Coefficients b_0..b_N of (1 - xi)^order, by b_j = b_{j-1} (j - 1 - order) / j.
///
/// `order` may be any real; the scheme uses order = alpha and the partial-sum
/// identity uses order = alpha - 1.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> binomial_series(Scalar order, int N) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b(N + 1);
  b(0) = Scalar(1);
  for (int j = 1; j <= N; ++j) b(j) = b(j - 1) * (Scalar(j - 1) - order) / Scalar(j);
  return b;
}

template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> cq_weights(Scalar alpha, int N) {
  require(alpha > Scalar(0) && alpha < Scalar(1), "cq_weights: alpha must lie in (0,1)");
  require(N >= 1, "cq_weights: N must be positive");
  return binomial_series(alpha, N);
}

/// Backward Euler convolution quadrature on the uniform grid t_n = n*tau.
template <typename Scalar = double>
struct CQScheme {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar alpha;
  Scalar tau;
  int N;
  Vec weights;       // b_j^(alpha), j = 0..N
  Vec partial_sums;  // sum_{j<=n} b_j = b_n^(alpha-1), j = 0..N
  Scalar tau_pow;    // tau^-alpha

  CQScheme(Scalar alpha_, Scalar T, int N_) : alpha(alpha_), tau(T / Scalar(N_)), N(N_) {
    require(T > Scalar(0), "CQScheme: final time must be positive");
    weights = cq_weights(alpha, N);
    partial_sums = binomial_series(alpha - Scalar(1), N);
    using std::pow;
    tau_pow = pow(tau, -alpha);
  }

  Scalar final_time() const { return tau * Scalar(N); }
  Scalar time(int n) const { return tau * Scalar(n); }
};

using CQSchemed = CQScheme<double>;

/// tau^-alpha sum_{j=0}^n b_j (phi^{n-j} - phi^0) for a scalar or vector
/// trajectory whose levels are the columns of `levels`.
template <typename Scalar, typename Derived>
auto discrete_caputo(const CQScheme<Scalar>& scheme, const Eigen::MatrixBase<Derived>& levels, int n)
    -> Eigen::Matrix<Scalar, Eigen::Dynamic, 1> {
  require(n >= 0 && n <= scheme.N, "discrete_caputo: step index out of range");
  require(levels.cols() > n, "discrete_caputo: trajectory too short");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(levels.rows());
  for (int j = 0; j <= n; ++j) acc += scheme.weights(j) * (levels.col(n - j) - levels.col(0));
  return scheme.tau_pow * acc;
}

}  // namespace fracinv
