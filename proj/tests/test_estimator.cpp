#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/data_helpers.hpp"
#include "support/oracles.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/random.hpp"
#include "tailvc/simulation.hpp"

using namespace tailvc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// single observation with Y = e * omega, intercept only, unit kernel weight
struct OneObs {
  Dataset data;
  FitConfig cfg;
  Eigen::VectorXd t0;
};

OneObs one_observation(double omega = 2.0) {
  OneObs s;
  s.data.y.resize(1);
  s.data.y << std::exp(1.0) * omega;
  s.data.x.resize(1, 0);
  s.data.t.resize(1, 0);
  s.cfg = helpers::basic_config(0, 1.0, omega, true);
  s.cfg.bandwidths.resize(0);
  s.t0.resize(0);
  return s;
}

Eigen::VectorXd vec1(double a) {
  Eigen::VectorXd v(1);
  v << a;
  return v;
}

}  // namespace

TEST_CASE("objective: hand evaluation of a one-term sum") {
  OneObs s = one_observation();
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);
  REQUIRE_THAT(objective(s.data, theta0, s.t0, s.cfg), WithinAbs(1.0, 1e-15));
  // convexity around the minimizer
  Eigen::VectorXd half = vec1(0.5);
  REQUIRE_THAT(objective(s.data, half, s.t0, s.cfg),
               WithinAbs(std::exp(0.5) - 0.5, 1e-12));
  REQUIRE(objective(s.data, half, s.t0, s.cfg) > 1.0);
}

TEST_CASE("objective with no exceedances is an error") {
  OneObs s = one_observation();
  s.cfg.threshold = 100.0;
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);
  try {
    objective(s.data, theta0, s.t0, s.cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::no_local_exceedances);
  }
}

TEST_CASE("gradient and hessian: hand evaluation at the one-term optimum") {
  OneObs s = one_observation();
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);
  REQUIRE_THAT(gradient(s.data, theta0, s.t0, s.cfg)[0], WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(hessian(s.data, theta0, s.t0, s.cfg)(0, 0), WithinAbs(1.0, 1e-15));
}

TEST_CASE("analytic derivatives match finite differences on random instances") {
  Rng rng(42);
  for (int rep = 0; rep < 100; ++rep) {
    const int p = 1 + static_cast<int>(rng.next_u64() % 3);
    const int q = 1;
    Dataset data = helpers::small_random_data(40, p, q, rng);
    FitConfig cfg = helpers::basic_config(q, 0.8, 1.0, rep % 2 == 0);
    const Eigen::VectorXd t0 = vec1(rng.uniform(0.2, 0.8));
    const Eigen::Index d = design_dim(data, cfg);
    Eigen::VectorXd theta(d);
    for (Eigen::Index j = 0; j < d; ++j) theta[j] = rng.uniform(-0.4, 0.4);

    auto f = [&](const Eigen::VectorXd& th) { return objective(data, th, t0, cfg); };
    auto g = [&](const Eigen::VectorXd& th) { return gradient(data, th, t0, cfg); };

    const Eigen::VectorXd g_analytic = g(theta);
    const Eigen::VectorXd g_fd = oracles::fd_gradient(f, theta, 1e-5);
    REQUIRE((g_analytic - g_fd).norm() <= 1e-6 * std::max(1.0, g_fd.norm()));

    const Eigen::MatrixXd h_analytic = hessian(data, theta, t0, cfg);
    const Eigen::MatrixXd h_fd = oracles::fd_jacobian(g, theta, 1e-5);
    REQUIRE((h_analytic - h_fd).norm() <= 1e-5 * std::max(1.0, h_fd.norm()));
  }
}

TEST_CASE("hessian is positive semidefinite wherever defined") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Dataset data = helpers::small_random_data(30, 2, 1, rng);
    FitConfig cfg = helpers::basic_config(1, 0.9, 1.0);
    Eigen::VectorXd theta(3);
    for (int j = 0; j < 3; ++j) theta[j] = rng.uniform(-0.5, 0.5);
    const Eigen::MatrixXd h = hessian(data, theta, vec1(0.5), cfg);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("objective is convex along random chords") {
  Rng rng(99);
  Dataset data = helpers::small_random_data(50, 2, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 0.9, 1.0);
  const Eigen::VectorXd t0 = vec1(0.4);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd a(3), b(3);
    for (int j = 0; j < 3; ++j) {
      a[j] = rng.uniform(-1.0, 1.0);
      b[j] = rng.uniform(-1.0, 1.0);
    }
    const double lambda = rng.uniform(0.05, 0.95);
    const Eigen::VectorXd mid = lambda * a + (1.0 - lambda) * b;
    REQUIRE(objective(data, mid, t0, cfg) <=
            lambda * objective(data, a, t0, cfg) +
                (1.0 - lambda) * objective(data, b, t0, cfg) + 1e-10);
  }
}

TEST_CASE("hill estimator hand values") {
  Eigen::VectorXd y(4);
  y << std::exp(1.0), std::exp(2.0), std::exp(3.0), std::exp(4.0);
  REQUIRE_THAT(hill(y, 1.0), WithinAbs(2.5, 1e-12));

  Eigen::VectorXd single(1);
  single << std::exp(1.0) * 7.0;
  REQUIRE_THAT(hill(single, 7.0), WithinAbs(1.0, 1e-12));

  Eigen::VectorXd low(3);
  low << 0.5, 0.9, 1.0;
  try {
    hill(low, 1.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::no_exceedances);
  }
}

TEST_CASE("p=0, q=0 fit reproduces the Hill estimator") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 20 + static_cast<int>(rng.next_u64() % 30);
    Dataset data;
    data.y.resize(n);
    for (int i = 0; i < n; ++i) data.y[i] = std::exp(rng.uniform(0.0, 3.0));
    data.x.resize(n, 0);
    data.t.resize(n, 0);
    FitConfig cfg;
    cfg.kernel = KernelSpec{KernelFamily::epanechnikov_product, 0};
    cfg.bandwidths.resize(0);
    cfg.threshold = 1.2;
    cfg.include_intercept = true;
    const CoefficientFit fit = fit_at(data, Eigen::VectorXd(), cfg);
    REQUIRE(fit.converged);
    REQUIRE_THAT(std::exp(-fit.theta[0]), WithinAbs(hill(data.y, 1.2), 1e-10));
  }
}

TEST_CASE("p=0 fit equals the kernel-weighted Hill closed form") {
  Rng rng(31);
  Dataset data = helpers::small_random_data(60, 0, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 0.4, 1.0);
  for (double t : {0.2, 0.5, 0.9}) {
    const Eigen::VectorXd t0 = vec1(t);
    const double gamma_closed = local_hill(data, t0, cfg);
    const CoefficientFit fit = fit_at(data, t0, cfg);
    REQUIRE(fit.converged);
    REQUIRE_THAT(std::exp(-fit.theta[0]), WithinAbs(gamma_closed, 1e-8));
  }
}

TEST_CASE("local_hill with unit weights reduces to hill") {
  Rng rng(12);
  Dataset data = helpers::small_random_data(40, 0, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 50.0, 1.0);  // support covers all data
  const double gamma_local = local_hill(data, vec1(0.5), cfg);
  // kernel weights are not constant, so compare against the brute-force
  // weighted ratio rather than plain hill
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.y[i] <= 1.0) continue;
    Eigen::VectorXd u = (vec1(0.5) - data.t.row(i).transpose()) / 50.0;
    const double w = kernel_eval(cfg.kernel, u);
    num += w * std::log(data.y[i]);
    den += w;
  }
  REQUIRE_THAT(gamma_local, WithinAbs(num / den, 1e-12));

  // flat weights exactly: q = 0
  Dataset flat = data;
  flat.t.resize(data.n(), 0);
  FitConfig cfg0 = cfg;
  cfg0.kernel.dimension = 0;
  cfg0.bandwidths.resize(0);
  REQUIRE_THAT(local_hill(flat, Eigen::VectorXd(), cfg0),
               WithinAbs(hill(data.y, 1.0), 1e-14));

  // zero kernel mass is an error
  FitConfig far = cfg;
  far.threshold = 1e12;
  try {
    local_hill(data, vec1(0.5), far);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::no_local_exceedances);
  }
}

TEST_CASE("local_gram single-term hand value and brute force") {
  Dataset data;
  data.y.resize(2);
  data.y << 10.0, 0.5;
  data.x.resize(2, 1);
  data.x << 2.0, 9.0;
  data.t.resize(2, 1);
  data.t << 0.5, 0.9;
  FitConfig cfg = helpers::basic_config(1, 1.0, 1.0);
  const LocalGram g = local_gram(data, vec1(0.5), cfg);
  const double w = 0.75;  // K(0) with the second row excluded by the indicator
  REQUIRE_THAT(g.weight, WithinAbs(w, 1e-15));
  REQUIRE_THAT(g.matrix(0, 0), WithinAbs(w * 1.0, 1e-15));
  REQUIRE_THAT(g.matrix(0, 1), WithinAbs(w * 2.0, 1e-15));
  REQUIRE_THAT(g.matrix(1, 1), WithinAbs(w * 4.0, 1e-15));

  Rng rng(3);
  Dataset rd = helpers::small_random_data(25, 2, 1, rng);
  const LocalGram gr = local_gram(rd, vec1(0.3), cfg);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(3, 3);
  double ref_w = 0.0;
  for (Eigen::Index i = 0; i < rd.n(); ++i) {
    if (rd.y[i] <= 1.0) continue;
    const double w_i = kernel_eval(cfg.kernel, vec1((0.3 - rd.t(i, 0)) / 1.0));
    Eigen::VectorXd z(3);
    z << 1.0, rd.x(i, 0), rd.x(i, 1);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) ref(a, b) += w_i * z[a] * z[b];
    ref_w += w_i;
  }
  REQUIRE((gr.matrix - ref).lpNorm<Eigen::Infinity>() <= 1e-12);
  REQUIRE_THAT(gr.weight, WithinAbs(ref_w, 1e-12));

  // no exceedances: zero matrix, zero weight
  FitConfig high = cfg;
  high.threshold = 1e9;
  const LocalGram empty = local_gram(rd, vec1(0.3), high);
  REQUIRE(empty.weight == 0.0);
  REQUIRE(empty.matrix.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("fit_at consistency on constant-coefficient Pareto data") {
  Eigen::VectorXd theta(3);
  theta << 0.5, -0.3, 0.2;
  Dataset data = helpers::constant_theta_data(5000, theta, 1, 17);
  FitConfig cfg = helpers::basic_config(1, 2.0, threshold_for_fraction(data.y, 0.2), false);
  const CoefficientFit fit = fit_at(data, vec1(0.5), cfg);
  REQUIRE(fit.converged);
  REQUIRE((fit.theta - theta).lpNorm<Eigen::Infinity>() < 0.15);
}

TEST_CASE("insufficient local data is reported") {
  Dataset data;
  data.y.resize(5);
  data.y << 10.0, 10.0, 10.0, 0.5, 0.5;
  data.x.resize(5, 3);
  data.x.setRandom();
  data.t.resize(5, 1);
  data.t << 0.1, 0.5, 0.9, 0.2, 0.3;
  FitConfig cfg = helpers::basic_config(1, 1.0, 1.0);  // d = 4 > 3 exceedances
  try {
    fit_at(data, vec1(0.5), cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::insufficient_local_data);
  }
}

TEST_CASE("warm start does not move the optimum") {
  Rng rng(23);
  Dataset data = helpers::small_random_data(80, 2, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 0.6, 1.0);
  const Eigen::VectorXd t0 = vec1(0.55);
  const CoefficientFit cold = fit_at(data, t0, cfg);
  const CoefficientFit neighbor = fit_at(data, vec1(0.5), cfg);
  const CoefficientFit warm = fit_at(data, t0, cfg, neighbor.theta);
  const CoefficientFit zero = fit_at(data, t0, cfg, Eigen::VectorXd::Zero(3));
  REQUIRE(cold.converged);
  REQUIRE(warm.converged);
  REQUIRE(zero.converged);
  REQUIRE((cold.theta - warm.theta).lpNorm<Eigen::Infinity>() < 1e-7);
  REQUIRE((cold.theta - zero.theta).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("grid layout and failure marking") {
  Rng rng(2);
  Dataset data = helpers::small_random_data(60, 1, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 0.5, 1.0);
  const GridFit grid = fit_grid(data, 3, cfg);
  REQUIRE(grid.size() == 3);
  REQUIRE(grid.grid[0][0] == 0.0);
  REQUIRE(grid.grid[1][0] == 0.5);
  REQUIRE(grid.grid[2][0] == 1.0);

  Dataset d2 = helpers::small_random_data(80, 1, 2, rng);
  FitConfig cfg2 = helpers::basic_config(2, 0.7, 1.0);
  const GridFit grid2 = fit_grid(d2, 5, cfg2);
  REQUIRE(grid2.size() == 25);
}

TEST_CASE("parallel grid agrees with serial grid without warm starts") {
  Rng rng(8);
  Dataset data = helpers::small_random_data(120, 2, 1, rng);
  FitConfig cfg = helpers::basic_config(1, 0.5, 1.0);
  GridOptions serial;
  serial.threads = 1;
  const GridFit a = fit_grid(data, 21, cfg, serial);
  GridOptions parallel;
  parallel.threads = 4;
  const GridFit b = fit_grid(data, 21, cfg, parallel);
  REQUIRE(a.size() == b.size());
  for (Eigen::Index l = 0; l < a.size(); ++l) {
    REQUIRE(a.fits[l].usable() == b.fits[l].usable());
    if (!a.fits[l].usable()) continue;
    REQUIRE((a.fits[l].theta - b.fits[l].theta).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("grid estimates of a constant coefficient stay within noise of each other") {
  Eigen::VectorXd theta(2);
  theta << 0.8, -0.4;
  Dataset data = helpers::constant_theta_data(2000, theta, 1, 29);
  FitConfig cfg = helpers::basic_config(1, 0.3, threshold_for_fraction(data.y, 0.2), false);
  const GridFit grid = fit_grid(data, 21, cfg);
  for (int j = 0; j < 2; ++j) {
    double lo = 1e9, hi = -1e9;
    for (const CoefficientFit& fit : grid.fits) {
      REQUIRE(fit.usable());
      lo = std::min(lo, fit.theta[j]);
      hi = std::max(hi, fit.theta[j]);
    }
    REQUIRE(hi - lo < 0.3);
  }
}

TEST_CASE("Monte Carlo consistency: grid error shrinks with n") {
  Eigen::VectorXd theta(2);
  theta << 0.6, -0.2;
  std::vector<double> medians;
  for (int n : {500, 2000, 8000}) {
    std::vector<double> errs;
    for (int meta = 0; meta < 5; ++meta) {
      Dataset data = helpers::constant_theta_data(n, theta, 1, 1000 + 7 * meta);
      FitConfig cfg =
          helpers::basic_config(1, 0.4, threshold_for_fraction(data.y, 0.2), false);
      const GridFit grid = fit_grid(data, 21, cfg);
      double worst = 0.0;
      for (const CoefficientFit& fit : grid.fits)
        if (fit.usable())
          worst = std::max(worst, (fit.theta - theta).lpNorm<Eigen::Infinity>());
      errs.push_back(worst);
    }
    std::sort(errs.begin(), errs.end());
    medians.push_back(errs[2]);
  }
  REQUIRE(medians[0] > medians[1]);
  REQUIRE(medians[1] > medians[2]);
}
