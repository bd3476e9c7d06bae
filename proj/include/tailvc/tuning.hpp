#ifndef TAILVC_TUNING_HPP
#define TAILVC_TUNING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tailvc/errors.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/model.hpp"
#include "tailvc/parallel.hpp"
#include "tailvc/random.hpp"

namespace tailvc {

// How the calibration discrepancy compares the sorted uniform residuals.
// `literal` evaluates their own empirical distribution function at l/n0;
// `cramer_von_mises` compares against l/n0 directly.
enum class DiscrepancyForm { literal, cramer_von_mises };

struct TuningResult {
  Eigen::VectorXd bandwidths;  // selected H diagonal
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double threshold_fraction = std::numeric_limits<double>::quiet_NaN();  // achieved n0/n
  // (candidate, score) tables; excluded candidates carry a NaN score.
  std::vector<std::pair<Eigen::VectorXd, double>> cv_table;
  std::vector<std::pair<double, double>> dm_table;
};

// Threshold with exactly k = round(n * fraction) strict exceedances (for
// distinct values): the (k+1)-th largest response.
inline double threshold_for_fraction(const Eigen::Ref<const Eigen::VectorXd>& y,
                                     double fraction) {
  const Eigen::Index n = y.size();
  if (n < 2) fail(ErrorKind::empty_input, "need at least two responses");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    fail(ErrorKind::invalid_config, "exceedance fraction must lie in (0,1)");
  Eigen::Index k = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
  k = std::max<Eigen::Index>(1, std::min(n - 1, k));
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = y[i];
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<double>());
  return sorted[static_cast<std::size_t>(k)];
}

// Sorted uniform residuals exp{-exp(z^T theta_hat(T_i)) log(Y_i/omega)} of
// the exceedances, each theta_hat refitted at the exceedance's own location.
// Rows whose refit fails are dropped.
inline std::vector<double> u_residuals(const Dataset& data, const FitConfig& cfg,
                                       const NewtonOptions& opts = {}) {
  check_fit_config(data, cfg);
  const auto exc = detail::collect_exceedances(data, cfg);
  if (exc.m() == 0) fail(ErrorKind::no_exceedances, "no responses above omega");
  const auto links = detail::exceedance_links(exc, cfg, design_dim(data, cfg), opts);
  std::vector<double> u;
  u.reserve(static_cast<std::size_t>(exc.m()));
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (!links.ok[static_cast<std::size_t>(r)]) continue;
    u.push_back(std::exp(-std::exp(links.link[static_cast<std::size_t>(r)]) *
                         exc.log_excess[r]));
  }
  if (u.empty()) fail(ErrorKind::no_exceedances, "every residual refit failed");
  std::sort(u.begin(), u.end());
  return u;
}

inline double discrepancy_from_residuals(const std::vector<double>& u,
                                         DiscrepancyForm form) {
  const std::size_t n0 = u.size();
  if (n0 == 0) fail(ErrorKind::no_exceedances, "no residuals");
  double acc = 0.0;
  for (std::size_t l = 1; l <= n0; ++l) {
    const double target = static_cast<double>(l) / static_cast<double>(n0);
    double reference;
    if (form == DiscrepancyForm::literal) {
      // empirical CDF of the residuals themselves, evaluated at l/n0
      const auto upper = std::upper_bound(u.begin(), u.end(), target);
      reference = static_cast<double>(upper - u.begin()) / static_cast<double>(n0);
    } else {
      reference = target;
    }
    const double diff = u[l - 1] - reference;
    acc += diff * diff;
  }
  return acc / static_cast<double>(n0);
}

// Threshold-calibration discrepancy of the fitted model at (omega, H).
inline double discrepancy(const Dataset& data, const FitConfig& cfg,
                          DiscrepancyForm form = DiscrepancyForm::literal,
                          const NewtonOptions& opts = {}) {
  return discrepancy_from_residuals(u_residuals(data, cfg, opts), form);
}

namespace detail {

inline double bandwidth_size(const Eigen::VectorXd& h) {
  // comparison key for tie breaking; geometric mean
  if (h.size() == 0) return 1.0;
  return std::exp(h.array().log().sum() / static_cast<double>(h.size()));
}

}  // namespace detail

// D-fold cross-validation over bandwidth candidates at a predetermined
// threshold omega0. Fold blocks are contiguous runs of a seeded shuffle;
// the floor(n/D) leftover rows always train. Held-out exceedances whose
// refit fails are skipped; a candidate that evaluated less than 90% of the
// held-out exceedances is excluded, since its loss sum covers a smaller
// point set and is not comparable. Ties prefer the larger bandwidth.
inline TuningResult cv_bandwidth(const Dataset& data, double omega0,
                                 const std::vector<Eigen::VectorXd>& candidates,
                                 int folds, std::uint64_t seed,
                                 const KernelSpec& kernel, bool include_intercept,
                                 const NewtonOptions& newton = {}, unsigned threads = 1) {
  if (candidates.empty()) fail(ErrorKind::invalid_config, "no bandwidth candidates");
  if (folds < 2) fail(ErrorKind::invalid_config, "cross-validation needs D >= 2");
  const Eigen::Index n = data.n();
  const Eigen::Index block = n / folds;
  if (block < 1) fail(ErrorKind::invalid_config, "n/D must be at least 1");
  if (!(omega0 < data.y.maxCoeff()))
    fail(ErrorKind::invalid_config, "omega0 leaves no exceedances");

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  const std::size_t n_cand = candidates.size();
  // per (fold, candidate) partial sums, reduced in fold order afterwards
  std::vector<std::vector<double>> fold_scores(static_cast<std::size_t>(folds),
                                               std::vector<double>(n_cand, 0.0));
  std::vector<std::vector<Eigen::Index>> fold_counts(
      static_cast<std::size_t>(folds), std::vector<Eigen::Index>(n_cand, 0));

  parallel_for(static_cast<std::size_t>(folds), threads, [&](std::size_t fold) {
    const Eigen::Index lo = static_cast<Eigen::Index>(fold) * block;
    const Eigen::Index hi = lo + block;

    // training dataset = everything outside [lo, hi) in shuffled order
    Dataset train;
    train.y.resize(n - block);
    train.x.resize(n - block, data.p());
    train.t.resize(n - block, data.q());
    Eigen::Index w = 0;
    for (Eigen::Index pos = 0; pos < n; ++pos) {
      if (pos >= lo && pos < hi) continue;
      const Eigen::Index i = perm[static_cast<std::size_t>(pos)];
      train.y[w] = data.y[i];
      train.x.row(w) = data.x.row(i);
      train.t.row(w) = data.t.row(i);
      ++w;
    }

    FitConfig cfg;
    cfg.kernel = kernel;
    cfg.threshold = omega0;
    cfg.include_intercept = include_intercept;

    const Eigen::Index d = data.p() + (include_intercept ? 1 : 0);
    const Eigen::Index off = include_intercept ? 1 : 0;
    Eigen::VectorXd z(d);

    for (std::size_t c = 0; c < n_cand; ++c) {
      cfg.bandwidths = candidates[c];
      if (cfg.bandwidths.size() != data.q())
        fail(ErrorKind::dimension_mismatch, "bandwidth candidate has wrong length");
      const auto exc = detail::collect_exceedances(train, cfg);
      for (Eigen::Index pos = lo; pos < hi; ++pos) {
        const Eigen::Index i = perm[static_cast<std::size_t>(pos)];
        if (!(data.y[i] > omega0)) continue;
        try {
          const CoefficientFit fit =
              detail::fit_local(exc, data.t.row(i).transpose(), cfg, d, std::nullopt, newton);
          if (include_intercept) z[0] = 1.0;
          z.segment(off, data.p()) = data.x.row(i).transpose();
          const double a = z.dot(fit.theta);
          fold_scores[fold][c] += std::exp(a) * std::log(data.y[i] / omega0) - a;
          fold_counts[fold][c] += 1;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::insufficient_local_data &&
              e.kind() != ErrorKind::singular_hessian &&
              e.kind() != ErrorKind::no_local_exceedances)
            throw;
        }
      }
    }
  });

  Eigen::Index held_out_exceedances = 0;
  for (int fold = 0; fold < folds; ++fold) {
    const Eigen::Index lo = static_cast<Eigen::Index>(fold) * block;
    for (Eigen::Index pos = lo; pos < lo + block; ++pos)
      if (data.y[perm[static_cast<std::size_t>(pos)]] > omega0) ++held_out_exceedances;
  }

  TuningResult result;
  result.cv_table.reserve(n_cand);
  std::size_t best = n_cand;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n_cand; ++c) {
    double score = 0.0;
    Eigen::Index evaluated = 0;
    for (int fold = 0; fold < folds; ++fold) {
      score += fold_scores[static_cast<std::size_t>(fold)][c];
      evaluated += fold_counts[static_cast<std::size_t>(fold)][c];
    }
    if (evaluated == 0 || 10 * evaluated < 9 * held_out_exceedances) {
      result.cv_table.emplace_back(candidates[c], std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    result.cv_table.emplace_back(candidates[c], score);
    const bool better =
        score < best_score ||
        (score == best_score && best < n_cand &&
         detail::bandwidth_size(candidates[c]) > detail::bandwidth_size(candidates[best]));
    if (better) {
      best = c;
      best_score = score;
    }
  }
  if (best == n_cand)
    fail(ErrorKind::all_candidates_failed, "every bandwidth candidate failed on every fold");
  result.bandwidths = candidates[best];
  return result;
}

// Threshold selection by discrepancy minimization over exceedance-fraction
// candidates, at fixed bandwidths. Ties prefer the larger threshold.
inline TuningResult select_threshold(const Dataset& data, const Eigen::VectorXd& bandwidths,
                                     const std::vector<double>& fractions,
                                     const KernelSpec& kernel, bool include_intercept,
                                     DiscrepancyForm form = DiscrepancyForm::literal,
                                     const NewtonOptions& newton = {}, unsigned threads = 1) {
  if (fractions.empty()) fail(ErrorKind::invalid_config, "no threshold candidates");
  const Eigen::Index d = data.p() + (include_intercept ? 1 : 0);

  const std::size_t n_cand = fractions.size();
  std::vector<double> omegas(n_cand), scores(n_cand);
  parallel_for(n_cand, threads, [&](std::size_t c) {
    omegas[c] = threshold_for_fraction(data.y, fractions[c]);
    FitConfig cfg{kernel, bandwidths, omegas[c], include_intercept};
    Eigen::Index n0 = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
      if (data.y[i] > omegas[c]) ++n0;
    if (n0 < d + 1) {
      scores[c] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    try {
      scores[c] = discrepancy(data, cfg, form, newton);
    } catch (const Error&) {
      scores[c] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  TuningResult result;
  result.bandwidths = bandwidths;
  std::size_t best = n_cand;
  for (std::size_t c = 0; c < n_cand; ++c) {
    result.dm_table.emplace_back(omegas[c], scores[c]);
    if (std::isnan(scores[c])) continue;
    const bool better = best == n_cand || scores[c] < scores[best] ||
                        (scores[c] == scores[best] && omegas[c] > omegas[best]);
    if (better) best = c;
  }
  if (best == n_cand)
    fail(ErrorKind::all_candidates_failed, "every threshold candidate failed");
  result.threshold = omegas[best];
  Eigen::Index n0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (data.y[i] > result.threshold) ++n0;
  result.threshold_fraction = static_cast<double>(n0) / static_cast<double>(data.n());
  return result;
}

inline std::vector<Eigen::VectorXd> default_bandwidth_candidates(Eigen::Index q) {
  std::vector<Eigen::VectorXd> out;
  for (double h : {0.1, 0.2, 0.3, 0.4, 0.5})
    out.push_back(Eigen::VectorXd::Constant(q, h));
  return out;
}

inline std::vector<double> default_threshold_fractions() {
  return {0.30, 0.25, 0.20, 0.15, 0.10, 0.05, 0.03};
}

// Two-step tuning protocol: D-fold CV for the bandwidths at the
// predetermined fraction, then discrepancy minimization for the threshold.
// Empty candidate lists fall back to the context's defaults.
struct TuningPolicy {
  std::vector<Eigen::VectorXd> bandwidth_candidates;
  double predetermined_fraction = 0.2;
  int folds = 20;
  std::vector<double> threshold_fractions;
  bool tune_threshold = true;
  DiscrepancyForm discrepancy_form = DiscrepancyForm::literal;
  NewtonOptions newton;
  unsigned threads = 1;
};

inline TuningResult tune(const Dataset& data, const KernelSpec& kernel,
                         bool include_intercept, const TuningPolicy& policy,
                         std::uint64_t seed) {
  auto candidates = policy.bandwidth_candidates.empty()
                        ? default_bandwidth_candidates(data.q())
                        : policy.bandwidth_candidates;
  const double omega0 = threshold_for_fraction(data.y, policy.predetermined_fraction);
  TuningResult cv = cv_bandwidth(data, omega0, candidates, policy.folds, seed, kernel,
                                 include_intercept, policy.newton, policy.threads);
  if (!policy.tune_threshold) {
    cv.threshold = omega0;
    Eigen::Index n0 = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
      if (data.y[i] > omega0) ++n0;
    cv.threshold_fraction = static_cast<double>(n0) / static_cast<double>(data.n());
    return cv;
  }
  const auto fractions = policy.threshold_fractions.empty() ? default_threshold_fractions()
                                                            : policy.threshold_fractions;
  TuningResult dm =
      select_threshold(data, cv.bandwidths, fractions, kernel, include_intercept,
                       policy.discrepancy_form, policy.newton, policy.threads);
  dm.cv_table = std::move(cv.cv_table);
  return dm;
}

}  // namespace tailvc

#endif
