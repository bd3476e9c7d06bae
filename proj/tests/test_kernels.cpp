#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "support/oracles.hpp"
#include "tailvc/kernels.hpp"

using namespace tailvc;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::VectorXd vec1(double a) {
  Eigen::VectorXd v(1);
  v << a;
  return v;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

double eval1(const KernelSpec& k, double u) { return kernel_eval(k, vec1(u)); }

}  // namespace

TEST_CASE("1-D Epanechnikov point values") {
  KernelSpec k{KernelFamily::epanechnikov_product, 1};
  REQUIRE(eval1(k, 0.0) == 0.75);
  REQUIRE(eval1(k, 2.0) == 0.0);
  REQUIRE(eval1(k, -1.0) == 0.0);
  REQUIRE_THAT(eval1(k, 0.5), WithinAbs(0.75 * 0.75, 1e-15));
}

TEST_CASE("spherical kernel point values") {
  KernelSpec k{KernelFamily::epanechnikov_spherical, 2};
  REQUIRE_THAT(kernel_eval(k, vec2(0.0, 0.0)), WithinAbs(2.0 / std::numbers::pi, 1e-15));
  REQUIRE(kernel_eval(k, vec2(0.8, 0.8)) == 0.0);
}

TEST_CASE("eval vanishes continuously at the support boundary") {
  KernelSpec prod{KernelFamily::epanechnikov_product, 1};
  KernelSpec sph{KernelFamily::epanechnikov_spherical, 2};
  REQUIRE(eval1(prod, 1.0 - 1e-9) < 2e-9);
  const double r = 1.0 - 1e-9;
  REQUIRE(kernel_eval(sph, vec2(r, 0.0)) < 2e-9);
}

TEST_CASE("eval rejects wrong argument length") {
  KernelSpec k{KernelFamily::epanechnikov_product, 2};
  REQUIRE_THROWS_AS(kernel_eval(k, vec1(0.0)), Error);
}

TEST_CASE("spherical family requires dimension 2") {
  KernelSpec k{KernelFamily::epanechnikov_spherical, 3};
  REQUIRE_THROWS_AS(kernel_nu(k), Error);
}

TEST_CASE("analytic constants, 1-D Epanechnikov") {
  KernelSpec k{KernelFamily::epanechnikov_product, 1};
  REQUIRE_THAT(kernel_nu(k), WithinAbs(0.6, 1e-15));
  REQUIRE_THAT(kernel_kappa(k)(0, 0), WithinAbs(0.2, 1e-15));
  REQUIRE_THAT(kernel_xi(k)(0, 0), WithinAbs(1.25, 1e-15));
  REQUIRE_THAT(kernel_xi(k, XiForm::second_derivative)(0, 0), WithinAbs(-2.5, 1e-15));
}

TEST_CASE("analytic constants, product q=2 and spherical") {
  KernelSpec prod{KernelFamily::epanechnikov_product, 2};
  REQUIRE_THAT(kernel_nu(prod), WithinAbs(0.36, 1e-15));
  REQUIRE_THAT(kernel_kappa(prod)(0, 0), WithinAbs(0.2, 1e-15));
  REQUIRE_THAT(kernel_kappa(prod)(1, 1), WithinAbs(0.2, 1e-15));
  REQUIRE(kernel_kappa(prod)(0, 1) == 0.0);

  KernelSpec sph{KernelFamily::epanechnikov_spherical, 2};
  REQUIRE_THAT(kernel_nu(sph), WithinAbs(4.0 / (3.0 * std::numbers::pi), 1e-15));
  REQUIRE_THAT(kernel_kappa(sph)(0, 0), WithinAbs(1.0 / 6.0, 1e-15));
  REQUIRE_THAT(kernel_kappa(sph)(1, 1), WithinAbs(1.0 / 6.0, 1e-15));
}

TEST_CASE("quadrature oracle: 1-D kernel moments") {
  KernelSpec k{KernelFamily::epanechnikov_product, 1};
  auto f = [&](double u) { return eval1(k, u); };
  REQUIRE_THAT(oracles::integrate_1d(f, -1, 1), WithinAbs(1.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_1d([&](double u) { return u * f(u); }, -1, 1),
               WithinAbs(0.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_1d([&](double u) { return u * u * f(u); }, -1, 1),
               WithinAbs(kernel_kappa(k)(0, 0), 1e-8));
  REQUIRE_THAT(oracles::integrate_1d([&](double u) { return f(u) * f(u); }, -1, 1),
               WithinAbs(kernel_nu(k), 1e-8));
}

TEST_CASE("quadrature oracle: product q=2 moments") {
  KernelSpec k{KernelFamily::epanechnikov_product, 2};
  auto f = [&](double a, double b) { return kernel_eval(k, vec2(a, b)); };
  REQUIRE_THAT(oracles::integrate_2d(f, -1, 1, -1, 1), WithinAbs(1.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_2d([&](double a, double b) { return a * f(a, b); }, -1, 1,
                                     -1, 1),
               WithinAbs(0.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_2d([&](double a, double b) { return a * a * f(a, b); }, -1,
                                     1, -1, 1),
               WithinAbs(kernel_kappa(k)(0, 0), 1e-8));
  REQUIRE_THAT(oracles::integrate_2d([&](double a, double b) { return a * b * f(a, b); }, -1,
                                     1, -1, 1),
               WithinAbs(kernel_kappa(k)(0, 1), 1e-8));
  REQUIRE_THAT(oracles::integrate_2d([&](double a, double b) { return f(a, b) * f(a, b); },
                                     -1, 1, -1, 1),
               WithinAbs(kernel_nu(k), 1e-8));
}

TEST_CASE("quadrature oracle: spherical moments via polar coordinates") {
  KernelSpec k{KernelFamily::epanechnikov_spherical, 2};
  auto f = [&](double a, double b) { return kernel_eval(k, vec2(a, b)); };
  REQUIRE_THAT(oracles::integrate_disk(f), WithinAbs(1.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_disk([&](double a, double b) { return a * f(a, b); }),
               WithinAbs(0.0, 1e-8));
  REQUIRE_THAT(oracles::integrate_disk([&](double a, double b) { return a * a * f(a, b); }),
               WithinAbs(kernel_kappa(k)(0, 0), 1e-8));
  REQUIRE_THAT(oracles::integrate_disk([&](double a, double b) { return f(a, b) * f(a, b); }),
               WithinAbs(kernel_nu(k), 1e-8));
}

TEST_CASE("quadrature oracle: gradient-outer xi matrix") {
  SECTION("1-D") {
    KernelSpec k{KernelFamily::epanechnikov_product, 1};
    // dK/du = -1.5 u on [-1,1]
    const double grad_sq =
        oracles::integrate_1d([](double u) { return 2.25 * u * u; }, -1, 1);
    REQUIRE_THAT(kernel_xi(k)(0, 0), WithinAbs(grad_sq / (2.0 * kernel_nu(k)), 1e-8));
  }
  SECTION("product q=2") {
    KernelSpec k{KernelFamily::epanechnikov_product, 2};
    auto k1 = [](double u) { return 0.75 * (1.0 - u * u); };
    auto dk1 = [](double u) { return -1.5 * u; };
    const double g11 = oracles::integrate_2d(
        [&](double a, double b) { return dk1(a) * k1(b) * dk1(a) * k1(b); }, -1, 1, -1, 1);
    const double g12 = oracles::integrate_2d(
        [&](double a, double b) { return dk1(a) * k1(b) * k1(a) * dk1(b); }, -1, 1, -1, 1);
    const Eigen::MatrixXd xi = kernel_xi(k);
    REQUIRE_THAT(xi(0, 0), WithinAbs(g11 / (2.0 * kernel_nu(k)), 1e-8));
    REQUIRE_THAT(xi(0, 1), WithinAbs(g12 / (2.0 * kernel_nu(k)), 1e-8));
    REQUIRE_THAT(xi(0, 0), WithinAbs(1.25, 1e-12));
  }
  SECTION("spherical") {
    KernelSpec k{KernelFamily::epanechnikov_spherical, 2};
    const double c = 2.0 / std::numbers::pi;
    const double g11 =
        oracles::integrate_disk([&](double a, double b) { (void)b; return 4.0 * c * c * a * a; });
    const double g12 =
        oracles::integrate_disk([&](double a, double b) { return 4.0 * c * c * a * b; });
    const Eigen::MatrixXd xi = kernel_xi(k);
    REQUIRE_THAT(xi(0, 0), WithinAbs(g11 / (2.0 * kernel_nu(k)), 1e-8));
    REQUIRE_THAT(xi(0, 1), WithinAbs(g12 / (2.0 * kernel_nu(k)), 1e-8));
  }
}

TEST_CASE("xi matrix is symmetric positive definite") {
  for (KernelSpec k : {KernelSpec{KernelFamily::epanechnikov_product, 1},
                       KernelSpec{KernelFamily::epanechnikov_product, 2},
                       KernelSpec{KernelFamily::epanechnikov_spherical, 2}}) {
    const Eigen::MatrixXd xi = kernel_xi(k);
    REQUIRE((xi - xi.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xi);
    REQUIRE(eig.eigenvalues().minCoeff() > 0.0);
  }
}
