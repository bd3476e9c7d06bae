#ifndef TAILVC_DIAGNOSTICS_HPP
#define TAILVC_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tailvc/errors.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/parallel.hpp"
#include "tailvc/random.hpp"

namespace tailvc {

// Residuals exp(z^T theta_hat(T_i)) log(Y_i/omega) of the exceedances,
// sorted ascending. Under a well-specified model these behave like a
// standard exponential sample; they relate to the uniform residuals through
// U = exp(-e).
inline std::vector<double> exponential_residuals(const Dataset& data, const FitConfig& cfg,
                                                 const NewtonOptions& opts = {}) {
  check_fit_config(data, cfg);
  const auto exc = detail::collect_exceedances(data, cfg);
  if (exc.m() == 0) fail(ErrorKind::no_exceedances, "no responses above omega");
  const auto links = detail::exceedance_links(exc, cfg, design_dim(data, cfg), opts);
  std::vector<double> e;
  e.reserve(static_cast<std::size_t>(exc.m()));
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (!links.ok[static_cast<std::size_t>(r)]) continue;
    e.push_back(std::exp(links.link[static_cast<std::size_t>(r)]) * exc.log_excess[r]);
  }
  if (e.empty()) fail(ErrorKind::no_exceedances, "every residual refit failed");
  std::sort(e.begin(), e.end());
  return e;
}

// Q-Q plot contents: standard-exponential quantiles at (l - 0.5)/n0 against
// the sorted residuals, with a pointwise simulation envelope.
struct QqData {
  std::vector<double> theoretical;
  std::vector<double> empirical;
  std::vector<double> envelope_low;
  std::vector<double> envelope_high;
};

namespace detail {

// type-7 (linear interpolation) quantile of a sorted sample
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t k = static_cast<std::size_t>(pos);
  if (k + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(k);
  return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

}  // namespace detail

// Envelope bounds are the pointwise 2.5%/97.5% quantiles of order statistics
// from `envelope_reps` standard-exponential samples of the same size.
inline QqData qq_data(const std::vector<double>& residuals, int envelope_reps,
                      std::uint64_t seed, unsigned threads = 1) {
  if (residuals.empty()) fail(ErrorKind::empty_input, "no residuals");
  if (envelope_reps < 1) fail(ErrorKind::invalid_config, "need at least one envelope sample");
  const std::size_t n0 = residuals.size();

  QqData out;
  out.empirical = residuals;
  std::sort(out.empirical.begin(), out.empirical.end());
  out.theoretical.resize(n0);
  for (std::size_t l = 0; l < n0; ++l) {
    const double prob = (static_cast<double>(l) + 0.5) / static_cast<double>(n0);
    out.theoretical[l] = -std::log(1.0 - prob);
  }

  std::vector<std::vector<double>> order_stats(static_cast<std::size_t>(envelope_reps));
  parallel_for(static_cast<std::size_t>(envelope_reps), threads, [&](std::size_t rep) {
    Rng rng(derive_seed(seed, rep));
    std::vector<double> sample(n0);
    for (double& v : sample) v = rng.exponential();
    std::sort(sample.begin(), sample.end());
    order_stats[rep] = std::move(sample);
  });

  out.envelope_low.resize(n0);
  out.envelope_high.resize(n0);
  std::vector<double> column(static_cast<std::size_t>(envelope_reps));
  for (std::size_t l = 0; l < n0; ++l) {
    for (std::size_t rep = 0; rep < column.size(); ++rep) column[rep] = order_stats[rep][l];
    std::sort(column.begin(), column.end());
    out.envelope_low[l] = detail::sorted_quantile(column, 0.025);
    out.envelope_high[l] = detail::sorted_quantile(column, 0.975);
  }
  return out;
}

enum class ReferenceDist { uniform01, exp1 };

// Kolmogorov-Smirnov sup-distance between the sample and the reference CDF.
inline double ks_statistic(std::vector<double> values, ReferenceDist reference) {
  if (values.empty()) fail(ErrorKind::empty_input, "no values");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double f;
    if (reference == ReferenceDist::uniform01)
      f = std::min(1.0, std::max(0.0, values[i]));
    else
      f = values[i] > 0.0 ? 1.0 - std::exp(-values[i]) : 0.0;
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - f);
    d = std::max(d, f - static_cast<double>(i) / n);
  }
  return d;
}

}  // namespace tailvc

#endif
