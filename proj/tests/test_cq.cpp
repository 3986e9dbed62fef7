#include <doctest.h>

#include <cmath>

#include "fracinv/cq.hpp"

using namespace fracinv;

namespace {

// (-1)^j binom(a, j) for a < j integer-free, via log-Gamma:
// binom(a, j) = Gamma(a+1) / (Gamma(j+1) Gamma(a-j+1)); (-1)^j binom(a, j) = Gamma(j-a) / (Gamma(-a) Gamma(j+1)).
double signed_binomial(double a, int j) {
  if (j == 0) return 1.0;
  const double mag = static_cast<double>(std::exp(std::lgamma((long double)j - a) - std::lgamma(j + 1.0L) - std::lgamma(-(long double)a)));
  // Gamma(-a) < 0 for a in (0,1), Gamma(j-a) > 0 for j >= 1.
  return a > 0 ? -mag : mag;
}

}  // namespace

TEST_CASE("weights for alpha = 1/2") {
  const auto b = cq_weights(0.5, 4);
  CHECK(b(0) == 1.0);
  CHECK(b(1) == -0.5);
  CHECK(b(2) == -0.125);
  CHECK(b(3) == -0.0625);
  CHECK(b(4) == -0.0390625);
}

TEST_CASE("weights agree with the log-Gamma oracle") {
  for (double a : {0.25, 0.5, 0.75}) {
    const auto b = cq_weights(a, 10000);
    double worst = 0;
    for (int j = 0; j <= 10000; ++j) worst = std::max(worst, std::abs(b(j) - signed_binomial(a, j)) / std::abs(b(j)));
    CHECK(worst <= 1e-12);
    for (int j = 1; j <= 10000; ++j) REQUIRE(b(j) < 0);
  }
}

TEST_CASE("partial sums equal the order alpha-1 weights") {
  for (double a : {0.25, 0.5, 0.75}) {
    CQScheme<double> s(a, 1.0, 10000);
    double acc = 0, worst = 0;
    for (int m = 0; m <= 10000; ++m) {
      acc += s.weights(m);
      worst = std::max(worst, std::abs(acc - s.partial_sums(m)) / s.partial_sums(m));
      REQUIRE(s.partial_sums(m) > 0);
    }
    CHECK(worst <= 1e-12);
  }
  // sum_{j<=10} b_j at alpha = 1/2 equals (-1)^10 binom(-1/2, 10) = 0.1761970520...
  const auto b = cq_weights(0.5, 10);
  CHECK(b.sum() == doctest::Approx(signed_binomial(-0.5, 10)).epsilon(1e-13));
  CHECK(std::abs(b.sum() - 0.17619705200195312) <= 1e-10);
}

TEST_CASE("alpha close to one") {
  const auto b = cq_weights(1.0 - 1e-12, 50);
  CHECK(b(0) == 1.0);
  CHECK(b(1) == doctest::Approx(-1.0));
  for (int j = 2; j <= 50; ++j) CHECK(std::abs(b(j)) < 1e-11);
}

TEST_CASE("weight magnitudes decay monotonically") {
  const auto b = cq_weights(0.3, 2000);
  for (int j = 2; j <= 2000; ++j) CHECK(std::abs(b(j)) < std::abs(b(j - 1)));
}

TEST_CASE("invalid parameters") {
  CHECK_THROWS_AS(cq_weights(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(cq_weights(1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(cq_weights(0.5, 0), std::invalid_argument);
  CQScheme<double> s(0.5, 1.0, 4);
  Eigen::MatrixXd traj = Eigen::MatrixXd::Zero(1, 5);
  CHECK_THROWS_AS(discrete_caputo(s, traj, 5), std::invalid_argument);
}

TEST_CASE("discrete Caputo derivative") {
  CQScheme<double> s(0.5, 1.0, 10);
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(2, 11, 3.0);
  for (int n = 0; n <= 10; ++n) CHECK(discrete_caputo(s, c, n).cwiseAbs().maxCoeff() == 0.0);

  // phi = t and phi = t^2: first-order convergence to the analytic Caputo derivative at t = 1.
  for (double a : {0.3, 0.5, 0.8}) {
    auto err = [&](int N, int p) {
      CQScheme<double> sc(a, 1.0, N);
      Eigen::MatrixXd phi(1, N + 1);
      for (int n = 0; n <= N; ++n) phi(0, n) = std::pow(sc.time(n), p);
      const double exact = std::tgamma(p + 1.0) / std::tgamma(p + 1.0 - a);
      return std::abs(discrete_caputo(sc, phi, N)(0) - exact);
    };
    for (int p : {1, 2}) {
      const double order = std::log2(err(400, p) / err(800, p));
      CHECK(order == doctest::Approx(1.0).epsilon(0.1));
    }
  }
}
