#ifndef TAILVC_TESTING_HPP
#define TAILVC_TESTING_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tailvc/errors.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/kernels.hpp"
#include "tailvc/model.hpp"
#include "tailvc/random.hpp"

namespace tailvc {

// Limiting law of the centered, scaled maximal deviation.
inline double gumbel_cdf(double s) { return std::exp(-2.0 * std::exp(-s)); }

// Two-sided tail probability, min(G(s), 1 - G(s)).
inline double gumbel_p_value(double statistic) {
  const double g = gumbel_cdf(statistic);
  return std::min(g, 1.0 - g);
}

struct CriticalPair {
  double low;
  double high;
};

// Rejection thresholds at significance alpha: the null is rejected when the
// statistic falls below `low` or above `high`.
inline CriticalPair critical_values(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    fail(ErrorKind::invalid_alpha, "alpha must lie in (0,1)");
  const double low = -std::log(-0.5 * std::log(alpha / 2.0));
  const double high = -std::log(-0.5 * std::log(1.0 - alpha / 2.0));
  return {low, high};
}

// Centering constant of the maximal-deviation limit for bandwidth h on
// [0,1]^q. The log log term only exists for q > 1.
inline double dn_constant(double h, int q, const KernelSpec& kernel,
                          XiForm form = XiForm::gradient_outer) {
  if (q < 1) fail(ErrorKind::invalid_config, "dn requires q >= 1");
  if (!(h > 0.0) || h >= 1.0)
    fail(ErrorKind::bandwidth_out_of_range, "dn requires 0 < h < 1");
  const Eigen::MatrixXd xi = kernel_xi(kernel, form);
  const double det = xi.determinant();
  if (!(det > 0.0))
    fail(ErrorKind::invalid_config, "xi matrix determinant is not positive");
  const double a = std::sqrt(-2.0 * q * std::log(h));
  double bracket = std::log(std::pow(2.0 * q / std::numbers::pi, 0.5 * q) *
                            std::sqrt(det / (4.0 * q * std::numbers::pi)));
  if (q > 1) bracket += 0.5 * (q - 1) * std::log(std::log(1.0 / h));
  return a + bracket / a;
}

// Kernel estimate of n(t) sigma_nj(t): the (j,j) entry of the local Gram
// matrix (with X_0 = 1 at the intercept index).
inline double sigma_hat(const Dataset& data, const Eigen::VectorXd& t, Eigen::Index j,
                        const FitConfig& cfg) {
  const LocalGram gram = local_gram(data, t, cfg);
  if (j < 0 || j >= gram.matrix.rows())
    fail(ErrorKind::dimension_mismatch, "coefficient index out of range");
  return gram.matrix(j, j);
}

// Which local information scalar studentizes the deviation process.
// `wald` inverts the local Gram matrix, 1/[G^-1]_jj, so the standardized
// deviation has unit-nu variance whatever the covariate correlation; it
// coincides with `diagonal` (the raw (j,j) Gram entry) exactly when the
// local design is orthogonal, e.g. p = 0. `diagonal` is kept as a switch
// for auditing.
enum class SigmaForm { wald, diagonal };

// Local information for coefficient j under the chosen form; NaN when the
// Gram matrix carries no usable information for j.
inline double local_information(const LocalGram& gram, Eigen::Index j, SigmaForm form) {
  if (j < 0 || j >= gram.matrix.rows())
    fail(ErrorKind::dimension_mismatch, "coefficient index out of range");
  if (form == SigmaForm::diagonal) return gram.matrix(j, j);
  if (!(gram.matrix(j, j) > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (gram.matrix.rows() == 1) return gram.matrix(0, 0);  // the forms coincide
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram.matrix);
  if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(gram.matrix.rows());
  e[j] = 1.0;
  const Eigen::VectorXd col = ldlt.solve(e);
  if (!col.allFinite() || !(col[j] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return 1.0 / col[j];
}

namespace detail {

inline double common_bandwidth(const FitConfig& cfg) {
  if (cfg.bandwidths.size() == 0)
    fail(ErrorKind::invalid_config, "test requires q >= 1");
  // geometric mean when bandwidths differ across axes
  return std::exp(cfg.bandwidths.array().log().sum() /
                  static_cast<double>(cfg.bandwidths.size()));
}

}  // namespace detail

// Core of the sup statistic: max_l sqrt(sigma_l) |theta_l - eta_l|. Scaling
// every sigma by c > 0 scales the result by sqrt(c).
inline double max_weighted_deviation(const std::vector<double>& sigma,
                                     const std::vector<double>& theta,
                                     const std::vector<double>& eta) {
  if (sigma.size() != theta.size() || sigma.size() != eta.size())
    fail(ErrorKind::shape_mismatch, "deviation inputs disagree in length");
  if (sigma.empty()) fail(ErrorKind::empty_input, "no deviations");
  double max_dev = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < sigma.size(); ++l)
    max_dev = std::max(max_dev, std::sqrt(sigma[l]) * std::abs(theta[l] - eta[l]));
  return max_dev;
}

// Sup-deviation statistic for H0: theta_j(.) == eta(.), the sup approximated
// by the max over the grid. Grid points whose fit failed or did not converge
// are skipped; more than 10% skipped aborts the test.
inline double test_statistic(const GridFit& grid_fit, const std::vector<double>& eta_on_grid,
                             Eigen::Index j, const Dataset& data, const FitConfig& cfg,
                             XiForm xi_form = XiForm::gradient_outer,
                             SigmaForm sigma_form = SigmaForm::wald,
                             Eigen::Index* skipped_out = nullptr) {
  const Eigen::Index points = grid_fit.size();
  if (points == 0) fail(ErrorKind::empty_grid, "grid fit is empty");
  if (static_cast<Eigen::Index>(eta_on_grid.size()) != points)
    fail(ErrorKind::shape_mismatch, "eta sequence does not match the grid");

  Eigen::Index skipped = 0;
  std::vector<double> sigma, theta, eta;
  for (Eigen::Index l = 0; l < points; ++l) {
    const CoefficientFit& fit = grid_fit.fits[static_cast<std::size_t>(l)];
    if (!fit.usable() || !fit.converged) {
      ++skipped;
      continue;
    }
    if (j < 0 || j >= fit.theta.size())
      fail(ErrorKind::dimension_mismatch, "coefficient index out of range");
    const double info = local_information(
        local_gram(data, grid_fit.grid[static_cast<std::size_t>(l)], cfg), j, sigma_form);
    if (std::isnan(info)) {
      ++skipped;
      continue;
    }
    sigma.push_back(info);
    theta.push_back(fit.theta[j]);
    eta.push_back(eta_on_grid[static_cast<std::size_t>(l)]);
  }
  if (skipped_out) *skipped_out = skipped;
  if (skipped == points) fail(ErrorKind::all_points_failed, "no usable grid point");
  if (10 * skipped > points)
    fail(ErrorKind::too_many_failed_points,
         std::to_string(skipped) + " of " + std::to_string(points) + " grid fits unusable");
  const double max_dev = max_weighted_deviation(sigma, theta, eta);

  const double h = detail::common_bandwidth(cfg);
  const int q = static_cast<int>(data.q());
  const double a = std::sqrt(-2.0 * q * std::log(h));
  const double dn = dn_constant(h, q, cfg.kernel, xi_form);
  const double nu = kernel_nu(cfg.kernel);
  return a * (max_dev / std::sqrt(nu) - dn);
}

enum class NullKind { zero, constant };

// One test decision: statistic, critical pair, two-sided p-value and flag.
struct TestOutcome {
  Eigen::Index coefficient_index = 0;
  NullKind null_kind = NullKind::zero;
  double null_value = 0.0;  // estimated C0 for the constancy null
  double statistic = std::numeric_limits<double>::quiet_NaN();
  double critical_low = 0.0;
  double critical_high = 0.0;
  double p_value = 1.0;
  bool rejected = false;
  Eigen::Index grid_points = 0;
  Eigen::Index skipped_points = 0;
};

namespace detail {

inline TestOutcome run_sup_test(const Dataset& data, const GridFit& grid_fit, Eigen::Index j,
                                const FitConfig& cfg, double alpha, NullKind kind,
                                double eta_value, XiForm xi_form, SigmaForm sigma_form) {
  const CriticalPair critical = critical_values(alpha);
  TestOutcome out;
  out.coefficient_index = j;
  out.null_kind = kind;
  out.null_value = eta_value;
  out.grid_points = grid_fit.size();
  const std::vector<double> eta(static_cast<std::size_t>(grid_fit.size()), eta_value);
  out.statistic = test_statistic(grid_fit, eta, j, data, cfg, xi_form, sigma_form,
                                 &out.skipped_points);
  out.critical_low = critical.low;
  out.critical_high = critical.high;
  out.p_value = gumbel_p_value(out.statistic);
  out.rejected = out.statistic < critical.low || out.statistic > critical.high;
  return out;
}

}  // namespace detail

// H0Z: theta_j(.) == 0.
inline TestOutcome test_zero(const Dataset& data, const GridFit& grid_fit, Eigen::Index j,
                             const FitConfig& cfg, double alpha,
                             XiForm xi_form = XiForm::gradient_outer,
                             SigmaForm sigma_form = SigmaForm::wald) {
  return detail::run_sup_test(data, grid_fit, j, cfg, alpha, NullKind::zero, 0.0, xi_form,
                              sigma_form);
}

// H0C: theta_j(.) == C0 with C0 estimated as the grid average of the fits.
inline TestOutcome test_constant(const Dataset& data, const GridFit& grid_fit, Eigen::Index j,
                                 const FitConfig& cfg, double alpha,
                                 XiForm xi_form = XiForm::gradient_outer,
                                 SigmaForm sigma_form = SigmaForm::wald) {
  double sum = 0.0;
  Eigen::Index used = 0;
  for (const CoefficientFit& fit : grid_fit.fits) {
    if (!fit.usable() || !fit.converged) continue;
    if (j < 0 || j >= fit.theta.size())
      fail(ErrorKind::dimension_mismatch, "coefficient index out of range");
    sum += fit.theta[j];
    ++used;
  }
  if (used == 0) fail(ErrorKind::all_points_failed, "no usable grid point");
  const double c0 = sum / static_cast<double>(used);
  return detail::run_sup_test(data, grid_fit, j, cfg, alpha, NullKind::constant, c0, xi_form,
                              sigma_form);
}

// Pointwise confidence intervals theta_hat_j(t) +- z * sqrt(nu / sigma),
// bias ignored. Failed grid points yield NaN bounds.
inline std::vector<std::pair<double, double>> pointwise_ci(const GridFit& grid_fit,
                                                           Eigen::Index j,
                                                           const Dataset& data,
                                                           const FitConfig& cfg,
                                                           double level,
                                                           SigmaForm sigma_form = SigmaForm::wald) {
  if (!(level >= 0.0) || !(level < 1.0))
    fail(ErrorKind::invalid_alpha, "confidence level must lie in [0,1)");
  const double z = norm_ppf(1.0 - (1.0 - level) / 2.0);
  const double nu = kernel_nu(cfg.kernel);
  std::vector<std::pair<double, double>> out;
  out.reserve(grid_fit.grid.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t l = 0; l < grid_fit.grid.size(); ++l) {
    const CoefficientFit& fit = grid_fit.fits[l];
    if (!fit.usable()) {
      out.emplace_back(nan, nan);
      continue;
    }
    const double s = local_information(local_gram(data, grid_fit.grid[l], cfg), j, sigma_form);
    if (std::isnan(s) || !(s > 0.0))
      fail(ErrorKind::zero_local_information, "no local information at a grid point");
    const double half = z * std::sqrt(nu / s);
    out.emplace_back(fit.theta[j] - half, fit.theta[j] + half);
  }
  return out;
}

}  // namespace tailvc

#endif
