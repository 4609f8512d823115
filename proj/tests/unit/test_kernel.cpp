#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "laood/error.hpp"
#include "laood/kernel.hpp"
#include "support/oracles.hpp"

using namespace laood;
using kernel::KernelParams;

TEST_CASE("rbf of a point with itself is one") {
  std::vector<double> x{0.3, -1.2, 4.0};
  CHECK(kernel::rbf(x, x, KernelParams{0.5}) == 1.0);
}

TEST_CASE("rbf at unit distance with gamma 0.5") {
  std::vector<double> a{0, 0}, b{1, 0};
  // exp(-0.5) to 10 digits
  CHECK(kernel::rbf(a, b, KernelParams{0.5}) == doctest::Approx(0.6065306597).epsilon(1e-10));
}

TEST_CASE("diagnostic gamma zero gives one everywhere") {
  std::vector<double> a{0, 0}, b{100, -3};
  CHECK(kernel::rbf(a, b, KernelParams{0.0, true}) == 1.0);
  CHECK_THROWS_AS(kernel::rbf(a, b, KernelParams{0.0}), Error);
  CHECK_THROWS_AS(kernel::rbf(a, b, KernelParams{-1.0}), Error);
}

TEST_CASE("rbf input validation") {
  std::vector<double> a{0, 0}, b{1, 0, 2};
  CHECK_THROWS_AS(kernel::rbf(a, b, KernelParams{1.0}), DimensionError);
  std::vector<double> bad{std::numeric_limits<double>::quiet_NaN(), 0};
  CHECK_THROWS_AS(kernel::rbf(a, bad, KernelParams{1.0}), Error);
  std::vector<double> inf{std::numeric_limits<double>::infinity(), 0};
  CHECK_THROWS_AS(kernel::rbf(inf, a, KernelParams{1.0}), Error);
}

TEST_CASE("symmetry, bounds and monotonicity in gamma") {
  const auto X = oracle::gaussian_matrix(40, 5, 11);
  for (std::size_t i = 0; i + 1 < X.rows(); i += 2) {
    const auto x = X.row(i), y = X.row(i + 1);
    double prev = 2.0;
    for (double g : {0.001, 0.01, 0.1, 0.5, 1.0}) {
      const double k = kernel::rbf(x, y, KernelParams{g});
      CHECK(k == kernel::rbf(y, x, KernelParams{g}));
      CHECK(k > 0.0);
      CHECK(k < 1.0);
      CHECK(k < prev);
      prev = k;
    }
  }
}

TEST_CASE("gram edge cases") {
  CHECK_THROWS_AS(kernel::gram(Matrix(0, 3), KernelParams{1.0}), Error);
  const Matrix one{{1.0, 2.0}};
  CHECK(kernel::gram(one, KernelParams{1.0}) == Matrix{{1.0}});
  const Matrix twin{{1.0, 2.0}, {1.0, 2.0}};
  CHECK(kernel::gram(twin, KernelParams{1.0}) == Matrix{{1.0, 1.0}, {1.0, 1.0}});
}

TEST_CASE("gram matches elementwise rbf exactly") {
  const auto X = oracle::gaussian_matrix(3, 4, 5);
  const KernelParams p{0.7};
  const Matrix G = kernel::gram(X, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(G(i, j) == kernel::rbf(X.row(i), X.row(j), p));
}

TEST_CASE("expanded gram agrees with direct gram and keeps a unit diagonal") {
  const auto X = oracle::gaussian_matrix(12, 6, 8, 3.0);
  const KernelParams p{0.05};
  const Matrix A = kernel::gram(X, p, kernel::GramMode::direct);
  const Matrix B = kernel::gram(X, p, kernel::GramMode::expanded);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    CHECK(B(i, i) == 1.0);
    for (std::size_t j = 0; j < X.rows(); ++j) {
      CHECK(B(i, j) == B(j, i));
      CHECK(std::abs(A(i, j) - B(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("gram is positive semidefinite") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 2 + seed % 9;
    const auto X = oracle::gaussian_matrix(n, 3, seed);
    const Matrix G = kernel::gram(X, KernelParams{0.1 * static_cast<double>(seed)});
    Eigen::MatrixXd E(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) E(i, j) = G(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(E);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
}
