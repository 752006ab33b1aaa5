#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirlap/composition.hpp"

using namespace dirlap;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("composition validation accepts interior points and rejects the rest",
          "[composition]") {
  REQUIRE_NOTHROW(validate_composition(vec({0.2, 0.3, 0.5})));
  REQUIRE_THROWS_AS(validate_composition(vec({0.5})), shape_error);
  REQUIRE_THROWS_AS(validate_composition(vec({0.0, 1.0})), domain_error);
  REQUIRE_THROWS_AS(validate_composition(vec({-0.1, 0.6, 0.5})), domain_error);
  REQUIRE_THROWS_AS(validate_composition(vec({0.2, 0.3, 0.4})), simplex_error);
  // The looser external tolerance admits CSV round-trip noise.
  Eigen::VectorXd y = vec({0.2, 0.3, 0.5});
  y[0] += 5e-10;
  REQUIRE_THROWS_AS(validate_composition(y, simplex_tol_internal), simplex_error);
  REQUIRE_NOTHROW(validate_composition(y, simplex_tol_external));
}

TEST_CASE("matrix validation names the offending column", "[composition]") {
  Eigen::MatrixXd Y(3, 2);
  Y.col(0) = vec({0.2, 0.3, 0.5});
  Y.col(1) = vec({0.2, 0.3, 0.6});
  try {
    validate_composition_matrix(Y);
    FAIL("expected simplex_error");
  } catch (const simplex_error& e) {
    REQUIRE(std::string(e.what()).find("column 1") != std::string::npos);
  }
}

TEST_CASE("boundary compression maps the closed simplex inside", "[composition]") {
  const Eigen::Index N = 92, C = 4;
  Eigen::MatrixXd y(C, N);
  for (Eigen::Index n = 0; n < N; ++n) y.col(n) = vec({0.25, 0.25, 0.25, 0.25});
  y.col(0) = vec({0.0, 0.95, 0.05, 0.0});
  const CompositionMatrix out = transform_to_open_interval(y, N, C);
  // y* = (y (N-1) + 1/C) / N
  REQUIRE(out.data(0, 0) == Catch::Approx(0.25 / 92.0).epsilon(1e-14));
  REQUIRE(out.data(0, 0) == Catch::Approx(0.00271739130434782608).epsilon(1e-12));
  REQUIRE(out.data(1, 0) == Catch::Approx((0.95 * 91 + 0.25) / 92).epsilon(1e-14));
  for (Eigen::Index n = 0; n < N; ++n) {
    REQUIRE(out.data.col(n).sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE_NOTHROW(validate_composition(out.data.col(n), simplex_tol_external));
  }
}

TEST_CASE("boundary compression commutes with category relabeling",
          "[composition]") {
  Eigen::MatrixXd y(3, 5);
  y.setConstant(1.0 / 3);
  y.col(2) = vec({1.0, 0.0, 0.0});
  y.col(4) = vec({0.6, 0.4, 0.0});
  const CompositionMatrix direct = transform_to_open_interval(y, 5, 3);
  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 2, 0, 1;
  const Eigen::MatrixXd yp = perm * y;
  const CompositionMatrix permuted = transform_to_open_interval(yp, 5, 3);
  REQUIRE(((perm * direct.data) - permuted.data).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("boundary compression shrinkage vanishes as N grows", "[composition]") {
  // |T(y) - y| = |1/C - y (1 + ... )| / N <= (1/C + 1)/N elementwise.
  for (Eigen::Index N : {10, 1000, 1000000}) {
    Eigen::MatrixXd y(4, N);
    for (Eigen::Index n = 0; n < N; ++n) y.col(n) = vec({0.1, 0.2, 0.3, 0.4});
    y.col(0) = vec({1.0, 0.0, 0.0, 0.0});
    const CompositionMatrix out = transform_to_open_interval(y, N, 4);
    const double bound = (1.0 / 4 + 1.0) / static_cast<double>(N);
    REQUIRE((out.data - y).cwiseAbs().maxCoeff() <= bound + 1e-15);
  }
}

TEST_CASE("boundary compression rejects bad inputs", "[composition]") {
  Eigen::MatrixXd y(2, 3);
  y.setConstant(0.5);
  REQUIRE_THROWS_AS(transform_to_open_interval(y, 2, 2), shape_error);
  y(0, 1) = 1.2;
  y(1, 1) = -0.2;
  REQUIRE_THROWS_AS(transform_to_open_interval(y, 3, 2), domain_error);
  y(0, 1) = 0.9;
  y(1, 1) = 0.2;
  REQUIRE_THROWS_AS(transform_to_open_interval(y, 3, 2), simplex_error);
}

TEST_CASE("log density closed-form spot checks", "[composition]") {
  // Uniform density on the C-simplex is (C-1)!.
  REQUIRE(log_density({vec({0.4, 0.6})}, DirichletParams::from_alpha(vec({1, 1}))) ==
          Catch::Approx(0.0).margin(1e-14));
  REQUIRE(log_density({vec({0.1, 0.2, 0.3, 0.4})},
                      DirichletParams::from_alpha(vec({1, 1, 1, 1}))) ==
          Catch::Approx(std::log(6.0)).epsilon(1e-14));
  // Dir(2,1) at (0.75, 0.25): density 2 * 0.75 = 1.5.
  REQUIRE(log_density({vec({0.75, 0.25})},
                      DirichletParams::from_alpha(vec({2, 1}))) ==
          Catch::Approx(std::log(1.5)).epsilon(1e-14));
  // High-precision reference for a non-trivial alpha.
  REQUIRE(log_density({vec({0.2, 0.3, 0.5})},
                      DirichletParams::from_alpha(vec({0.3, 2.0, 4.5}))) ==
          Catch::Approx(0.154881148125072008617).epsilon(1e-13));
}

TEST_CASE("log density validates its arguments", "[composition]") {
  const auto params = DirichletParams::from_alpha(vec({1, 2}));
  REQUIRE_THROWS_AS(log_density({vec({0.0, 1.0})}, params), domain_error);
  REQUIRE_THROWS_AS(log_density({vec({0.2, 0.3, 0.5})}, params), shape_error);
  REQUIRE_THROWS_AS(DirichletParams::from_alpha(vec({1.0, 0.0})), domain_error);
  REQUIRE_THROWS_AS(DirichletParams::from_alpha(vec({1.0, -2.0})), domain_error);
}

TEST_CASE("moments closed-form spot checks", "[composition]") {
  const auto m123 = moments(DirichletParams::from_alpha(vec({1, 2, 3})));
  REQUIRE(m123.mean[0] == Catch::Approx(1.0 / 6).epsilon(1e-14));
  REQUIRE(m123.mean[1] == Catch::Approx(1.0 / 3).epsilon(1e-14));
  REQUIRE(m123.mean[2] == Catch::Approx(1.0 / 2).epsilon(1e-14));
  REQUIRE(m123.variance[0] == Catch::Approx(5.0 / 252).epsilon(1e-14));

  const auto m13 = moments(DirichletParams::from_alpha(vec({1, 3})));
  REQUIRE(m13.variance[0] == Catch::Approx(3.0 / 80).epsilon(1e-14));
  const auto m22 = moments(DirichletParams::from_alpha(vec({2, 2})));
  REQUIRE(m22.variance[0] == Catch::Approx(0.05).epsilon(1e-14));

  // High-precision references, alpha = (0.3, 2, 4.5).
  const auto mo = moments(DirichletParams::from_alpha(vec({0.3, 2.0, 4.5})));
  REQUIRE(mo.mean[0] == Catch::Approx(0.0441176470588235294118).epsilon(1e-14));
  REQUIRE(mo.mean[1] == Catch::Approx(0.294117647058823529412).epsilon(1e-14));
  REQUIRE(mo.mean[2] == Catch::Approx(0.661764705882352941176).epsilon(1e-14));
  REQUIRE(mo.variance[0] == Catch::Approx(0.00540657439446366782007).epsilon(1e-13));
  REQUIRE(mo.variance[1] == Catch::Approx(0.026616981634282672345).epsilon(1e-13));
  REQUIRE(mo.variance[2] == Catch::Approx(0.0286964333244610061219).epsilon(1e-13));
  REQUIRE(mo.covariance(0, 1) == Catch::Approx(-0.00166356135214266702156).epsilon(1e-13));
  REQUIRE(mo.covariance(0, 2) == Catch::Approx(-0.00374301304232100079851).epsilon(1e-13));
  REQUIRE(mo.covariance(1, 2) == Catch::Approx(-0.0249534202821400053234).epsilon(1e-13));
}

TEST_CASE("covariance rows sum to zero (the simplex constraint)", "[composition]") {
  const auto m = moments(DirichletParams::from_alpha(vec({0.7, 1.3, 2.2, 4.0})));
  const Eigen::VectorXd rowsum = m.covariance.rowwise().sum();
  REQUIRE(rowsum.cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE((m.covariance - m.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampling recovers mean and variance", "[composition]") {
  const auto params = DirichletParams::from_alpha(vec({1, 2, 3}));
  const Eigen::Index n = 200000;
  const CompositionMatrix draws = sample_dirichlet(params, n, 12345);
  REQUIRE(draws.data.rows() == 3);
  REQUIRE(draws.data.cols() == n);
  for (Eigen::Index j = 0; j < n; j += 997)
    REQUIRE_NOTHROW(validate_composition(draws.data.col(j), 1e-9));
  const Eigen::VectorXd mean = draws.data.rowwise().mean();
  REQUIRE(std::abs(mean[0] - 1.0 / 6) < 0.005);
  REQUIRE(std::abs(mean[1] - 1.0 / 3) < 0.005);
  REQUIRE(std::abs(mean[2] - 1.0 / 2) < 0.005);
  const Eigen::VectorXd dev = (draws.data.row(0).array() - mean[0]).matrix();
  const double var = dev.squaredNorm() / static_cast<double>(n - 1);
  // Var(y1) = 5/252 = 0.01984...; MC standard error ~ 1e-4.
  REQUIRE(std::abs(var - 5.0 / 252) < 5e-4);
}

TEST_CASE("Dirichlet marginals are Beta", "[composition]") {
  // y1 ~ Beta(a1, a0 - a1); check the third moment E[y1^3] against the exact
  // Beta formula prod_{k<3} (a1+k)/(a0+k).
  const auto params = DirichletParams::from_alpha(vec({0.8, 1.7, 3.5}));
  const double a1 = 0.8, a0 = 6.0;
  const double exact =
      (a1 / a0) * ((a1 + 1) / (a0 + 1)) * ((a1 + 2) / (a0 + 2));
  const CompositionMatrix draws = sample_dirichlet(params, 200000, 777);
  const double mc = draws.data.row(0).array().cube().mean();
  REQUIRE(std::abs(mc - exact) < 4e-4);
}

TEST_CASE("sampling is deterministic in the seed", "[composition]") {
  const auto params = DirichletParams::from_alpha(vec({0.5, 2.5}));
  const CompositionMatrix a = sample_dirichlet(params, 50, 9);
  const CompositionMatrix b = sample_dirichlet(params, 50, 9);
  const CompositionMatrix c = sample_dirichlet(params, 50, 10);
  REQUIRE(a.data == b.data);
  REQUIRE(a.data != c.data);
  REQUIRE_THROWS_AS(sample_dirichlet(params, 0, 1), domain_error);
}
