#ifndef TAILVC_ESTIMATOR_HPP
#define TAILVC_ESTIMATOR_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tailvc/errors.hpp"
#include "tailvc/model.hpp"
#include "tailvc/parallel.hpp"

namespace tailvc {

// Unnormalized empirical Gram matrix of the design rows over local
// exceedances, sum_i z_i z_i^T I(Y_i > omega) K(H^-1(t - T_i)), together with
// the same sum without the outer product. The diagonal entries are the
// kernel estimates of n(t) sigma_nj(t) used by the sup-deviation test.
struct LocalGram {
  Eigen::MatrixXd matrix;
  double weight = 0.0;
};

namespace detail {

// Rows with Y > omega, with design rows (1, x^T) or x^T prebuilt. The
// indicator removes everything else from every sum, so the estimator only
// ever touches this subset.
struct ExceedanceSet {
  Eigen::MatrixXd z;           // m x d
  Eigen::VectorXd log_excess;  // m, log(Y/omega) > 0
  Eigen::MatrixXd t;           // m x q
  double omega = 0.0;

  Eigen::Index m() const { return log_excess.size(); }
  Eigen::Index d() const { return z.cols(); }
};

inline ExceedanceSet collect_exceedances(const Dataset& data, const FitConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = design_dim(data, cfg);
  const Eigen::Index off = cfg.include_intercept ? 1 : 0;
  std::vector<Eigen::Index> keep;
  keep.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.y[i] > cfg.threshold) keep.push_back(i);

  ExceedanceSet exc;
  exc.omega = cfg.threshold;
  exc.z.resize(static_cast<Eigen::Index>(keep.size()), d);
  exc.log_excess.resize(static_cast<Eigen::Index>(keep.size()));
  exc.t.resize(static_cast<Eigen::Index>(keep.size()), data.q());
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    const Eigen::Index i = keep[static_cast<std::size_t>(r)];
    if (cfg.include_intercept) exc.z(r, 0) = 1.0;
    exc.z.row(r).segment(off, data.p()) = data.x.row(i);
    exc.log_excess[r] = std::log(data.y[i] / cfg.threshold);
    exc.t.row(r) = data.t.row(i);
  }
  return exc;
}

// w_i = K(H^-1(t0 - T_i)) per exceedance row; all ones when q = 0.
inline Eigen::VectorXd local_weights(const ExceedanceSet& exc, const Eigen::VectorXd& t0,
                                     const FitConfig& cfg) {
  if (t0.size() != exc.t.cols())
    fail(ErrorKind::dimension_mismatch, "location has wrong length");
  Eigen::VectorXd w(exc.m());
  if (exc.t.cols() == 0) {
    w.setOnes();
    return w;
  }
  Eigen::VectorXd u(t0.size());
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    u = (t0 - exc.t.row(r).transpose()).cwiseQuotient(cfg.bandwidths);
    w[r] = kernel_eval(cfg.kernel, u);
  }
  return w;
}

inline double weighted_objective(const ExceedanceSet& exc, const Eigen::VectorXd& w,
                                 const Eigen::VectorXd& theta) {
  double value = 0.0;
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (w[r] == 0.0) continue;
    const double a = exc.z.row(r).dot(theta);
    value += w[r] * (std::exp(a) * exc.log_excess[r] - a);
  }
  return value;
}

inline Eigen::VectorXd weighted_gradient(const ExceedanceSet& exc, const Eigen::VectorXd& w,
                                         const Eigen::VectorXd& theta) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(exc.d());
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (w[r] == 0.0) continue;
    const double a = exc.z.row(r).dot(theta);
    g += (w[r] * (std::exp(a) * exc.log_excess[r] - 1.0)) * exc.z.row(r).transpose();
  }
  return g;
}

inline Eigen::MatrixXd weighted_hessian(const ExceedanceSet& exc, const Eigen::VectorXd& w,
                                        const Eigen::VectorXd& theta) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(exc.d(), exc.d());
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (w[r] == 0.0) continue;
    const double a = exc.z.row(r).dot(theta);
    h.selfadjointView<Eigen::Lower>().rankUpdate(exc.z.row(r).transpose(),
                                                 w[r] * std::exp(a) * exc.log_excess[r]);
  }
  return h.selfadjointView<Eigen::Lower>();
}

inline double local_hill_from_weights(const ExceedanceSet& exc, const Eigen::VectorXd& w) {
  const double denom = w.sum();
  if (!(denom > 0.0))
    fail(ErrorKind::no_local_exceedances, "no exceedances with positive kernel weight");
  return w.dot(exc.log_excess) / denom;
}

}  // namespace detail

struct NewtonOptions {
  double gradient_tolerance = 1e-8;  // infinity norm of the gradient
  int max_iterations = 100;
  int max_halvings = 30;
  double ridge_scale = 1e-8;  // one-shot ridge of ridge_scale * trace/d
};

// Weighted negative log-likelihood at theta for location t0. Strictly convex
// in theta on the span of the contributing design rows.
inline double objective(const Dataset& data, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& t0, const FitConfig& cfg) {
  check_fit_config(data, cfg);
  if (theta.size() != design_dim(data, cfg))
    fail(ErrorKind::dimension_mismatch, "theta has wrong length");
  auto exc = detail::collect_exceedances(data, cfg);
  auto w = detail::local_weights(exc, t0, cfg);
  if (!(w.sum() > 0.0)) fail(ErrorKind::no_local_exceedances, "objective is an empty sum");
  return detail::weighted_objective(exc, w, theta);
}

inline Eigen::VectorXd gradient(const Dataset& data, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& t0, const FitConfig& cfg) {
  check_fit_config(data, cfg);
  if (theta.size() != design_dim(data, cfg))
    fail(ErrorKind::dimension_mismatch, "theta has wrong length");
  auto exc = detail::collect_exceedances(data, cfg);
  auto w = detail::local_weights(exc, t0, cfg);
  if (!(w.sum() > 0.0)) fail(ErrorKind::no_local_exceedances, "gradient is an empty sum");
  return detail::weighted_gradient(exc, w, theta);
}

inline Eigen::MatrixXd hessian(const Dataset& data, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& t0, const FitConfig& cfg) {
  check_fit_config(data, cfg);
  if (theta.size() != design_dim(data, cfg))
    fail(ErrorKind::dimension_mismatch, "theta has wrong length");
  auto exc = detail::collect_exceedances(data, cfg);
  auto w = detail::local_weights(exc, t0, cfg);
  if (!(w.sum() > 0.0)) fail(ErrorKind::no_local_exceedances, "hessian is an empty sum");
  return detail::weighted_hessian(exc, w, theta);
}

// Hill estimator: mean log-excess over the threshold.
inline double hill(const Eigen::Ref<const Eigen::VectorXd>& y_values, double omega) {
  if (!(omega > 0.0)) fail(ErrorKind::invalid_config, "omega must be positive");
  double num = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < y_values.size(); ++i) {
    if (y_values[i] > omega) {
      num += std::log(y_values[i] / omega);
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::no_exceedances, "no responses above omega");
  return num / static_cast<double>(count);
}

// Kernel-weighted Hill estimator of gamma(t); the closed form of the p = 0
// fit, with exp(-theta0_hat(t)) equal to this value.
inline double local_hill(const Dataset& data, const Eigen::VectorXd& t0, const FitConfig& cfg) {
  check_fit_config(data, cfg);
  auto exc = detail::collect_exceedances(data, cfg);
  auto w = detail::local_weights(exc, t0, cfg);
  return detail::local_hill_from_weights(exc, w);
}

inline LocalGram local_gram(const Dataset& data, const Eigen::VectorXd& t0,
                            const FitConfig& cfg) {
  check_fit_config(data, cfg);
  auto exc = detail::collect_exceedances(data, cfg);
  auto w = detail::local_weights(exc, t0, cfg);
  LocalGram gram;
  gram.matrix = Eigen::MatrixXd::Zero(exc.d(), exc.d());
  for (Eigen::Index r = 0; r < exc.m(); ++r) {
    if (w[r] == 0.0) continue;
    gram.matrix.selfadjointView<Eigen::Lower>().rankUpdate(exc.z.row(r).transpose(), w[r]);
    gram.weight += w[r];
  }
  gram.matrix = gram.matrix.selfadjointView<Eigen::Lower>();
  return gram;
}

namespace detail {

struct NewtonSolve {
  bool ok = false;
  Eigen::VectorXd step;
};

inline NewtonSolve solve_newton_step(Eigen::MatrixXd h, const Eigen::VectorXd& g,
                                     double ridge_scale) {
  const Eigen::Index d = h.rows();
  auto attempt = [&](const Eigen::MatrixXd& m) -> NewtonSolve {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) return {};
    Eigen::VectorXd s = ldlt.solve(-g);
    if (!s.allFinite()) return {};
    const double residual = (m * s + g).lpNorm<Eigen::Infinity>();
    const double bound = 1e-8 * std::max(1.0, g.lpNorm<Eigen::Infinity>());
    if (residual > bound) return {};
    return {true, std::move(s)};
  };
  NewtonSolve first = attempt(h);
  if (first.ok) return first;
  const double ridge = ridge_scale * h.trace() / static_cast<double>(d);
  h.diagonal().array() += ridge;
  return attempt(h);
}

// Newton minimization of the local objective over theta with step-halving
// line search. Throws on structurally unusable input; an iteration-cap stall
// is reported through the convergence metadata instead.
inline CoefficientFit fit_local(const ExceedanceSet& exc, const Eigen::VectorXd& t0,
                                const FitConfig& cfg, Eigen::Index d,
                                const std::optional<Eigen::VectorXd>& init,
                                const NewtonOptions& opts) {
  const Eigen::VectorXd w = local_weights(exc, t0, cfg);
  Eigen::Index effective = 0;
  for (Eigen::Index r = 0; r < w.size(); ++r)
    if (w[r] > 0.0) ++effective;
  if (effective < d + 1)
    fail(ErrorKind::insufficient_local_data,
         "need at least d+1 = " + std::to_string(d + 1) + " local exceedances, have " +
             std::to_string(effective));

  CoefficientFit fit;
  fit.location = t0;
  fit.local_exceedance_weight = w.sum();

  auto default_init = [&] {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(d);
    if (cfg.include_intercept) theta0[0] = -std::log(local_hill_from_weights(exc, w));
    return theta0;
  };
  Eigen::VectorXd theta;
  if (init) {
    if (init->size() != d) fail(ErrorKind::dimension_mismatch, "init has wrong length");
    theta = *init;
  } else {
    theta = default_init();
  }

  double f = weighted_objective(exc, w, theta);
  if (!std::isfinite(f)) {  // a bad warm start must not poison the solve
    theta = default_init();
    f = weighted_objective(exc, w, theta);
  }
  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    Eigen::VectorXd g = weighted_gradient(exc, w, theta);
    fit.gradient_norm = g.lpNorm<Eigen::Infinity>();
    fit.iterations = iter;
    if (fit.gradient_norm <= opts.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    if (iter == opts.max_iterations) break;

    Eigen::MatrixXd h = weighted_hessian(exc, w, theta);
    NewtonSolve solve = solve_newton_step(std::move(h), g, opts.ridge_scale);
    if (!solve.ok)
      fail(ErrorKind::singular_hessian, "Hessian not solvable after ridge fallback");

    // Expected decrease of the full step. Once it falls below the rounding
    // noise of the objective sum, the line search cannot measure progress
    // any more and the unguarded Newton step finishes the quadratic phase.
    const double decrement = -g.dot(solve.step);
    if (decrement <= 1e-9 * (1.0 + std::abs(f))) {
      theta += solve.step;
      f = weighted_objective(exc, w, theta);
      continue;
    }

    // Halve only while the objective fails to decrease; ties are accepted.
    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving) {
      const Eigen::VectorXd candidate = theta + scale * solve.step;
      const double f_new = weighted_objective(exc, w, candidate);
      if (std::isfinite(f_new) && f_new <= f) {
        theta = candidate;
        f = f_new;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;  // stalled; convergence metadata tells the caller
  }

  fit.theta = std::move(theta);
  return fit;
}

// Linear predictor z_i^T theta_hat(T_i) refitted at every exceedance's own
// location, aligned with the ExceedanceSet rows. Locations are visited in
// lexicographic t order with warm starts; repeated locations reuse the fit.
// Failures are flagged per row instead of aborting.
struct PointwiseLinks {
  std::vector<double> link;
  std::vector<char> ok;
  Eigen::Index failures = 0;
};

inline PointwiseLinks exceedance_links(const ExceedanceSet& exc, const FitConfig& cfg,
                                       Eigen::Index d, const NewtonOptions& opts) {
  PointwiseLinks out;
  out.link.assign(static_cast<std::size_t>(exc.m()), 0.0);
  out.ok.assign(static_cast<std::size_t>(exc.m()), 0);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(exc.m()));
  for (Eigen::Index r = 0; r < exc.m(); ++r) order[static_cast<std::size_t>(r)] = r;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < exc.t.cols(); ++k) {
      if (exc.t(a, k) != exc.t(b, k)) return exc.t(a, k) < exc.t(b, k);
    }
    return a < b;
  });

  std::optional<Eigen::VectorXd> warm;
  std::optional<Eigen::VectorXd> last_location;
  Eigen::VectorXd last_theta;
  bool last_ok = false;
  for (Eigen::Index r : order) {
    const Eigen::VectorXd t0 = exc.t.row(r).transpose();
    if (last_location && (*last_location - t0).lpNorm<Eigen::Infinity>() == 0.0) {
      if (last_ok) {
        out.link[static_cast<std::size_t>(r)] = exc.z.row(r).dot(last_theta);
        out.ok[static_cast<std::size_t>(r)] = 1;
      } else {
        ++out.failures;
      }
      continue;
    }
    last_location = t0;
    try {
      CoefficientFit fit = fit_local(exc, t0, cfg, d, warm, opts);
      last_theta = fit.theta;
      last_ok = true;
      warm = fit.theta;
      out.link[static_cast<std::size_t>(r)] = exc.z.row(r).dot(fit.theta);
      out.ok[static_cast<std::size_t>(r)] = 1;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_local_data &&
          e.kind() != ErrorKind::singular_hessian &&
          e.kind() != ErrorKind::no_local_exceedances)
        throw;
      last_ok = false;
      ++out.failures;
    }
  }
  return out;
}

}  // namespace detail

// Local constant maximum-likelihood fit at t0. Requires at least d+1
// exceedances with positive kernel weight; throws InsufficientLocalData or
// SingularHessian otherwise. A fit that merely hits the iteration cap is
// returned with converged == false.
inline CoefficientFit fit_at(const Dataset& data, const Eigen::VectorXd& t0,
                             const FitConfig& cfg,
                             const std::optional<Eigen::VectorXd>& init = std::nullopt,
                             const NewtonOptions& opts = {}) {
  check_fit_config(data, cfg);
  auto exc = detail::collect_exceedances(data, cfg);
  return detail::fit_local(exc, t0, cfg, design_dim(data, cfg), init, opts);
}

inline Eigen::Index default_grid_size(Eigen::Index q) { return q <= 1 ? 101 : 21; }

struct GridOptions {
  unsigned threads = 1;   // > 1 disables warm starts so points are independent
  bool warm_start = true;
  NewtonOptions newton;
};

// Fits at every lattice point. Failed points are marked in the returned fits
// rather than aborting the grid. In the serial mode each point is warm
// started from the last successful neighbor.
inline GridFit fit_grid(const Dataset& data, Eigen::Index points_per_axis,
                        const FitConfig& cfg, const GridOptions& opts = {}) {
  check_fit_config(data, cfg);
  if (data.q() < 1) fail(ErrorKind::invalid_config, "fit_grid requires q >= 1");
  GridFit out;
  out.config = cfg;
  out.grid = make_grid(data.q(), points_per_axis);
  out.fits.resize(out.grid.size());

  const auto exc = detail::collect_exceedances(data, cfg);
  const Eigen::Index d = design_dim(data, cfg);

  auto fit_point = [&](std::size_t l, const std::optional<Eigen::VectorXd>& init) {
    try {
      return detail::fit_local(exc, out.grid[l], cfg, d, init, opts.newton);
    } catch (const Error& e) {
      CoefficientFit failed;
      failed.location = out.grid[l];
      failed.theta = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
      if (e.kind() == ErrorKind::insufficient_local_data)
        failed.failure = FitFailure::insufficient_local_data;
      else if (e.kind() == ErrorKind::singular_hessian)
        failed.failure = FitFailure::singular_hessian;
      else if (e.kind() == ErrorKind::no_local_exceedances)
        failed.failure = FitFailure::no_local_exceedances;
      else
        throw;
      return failed;
    }
  };

  if (opts.threads > 1) {
    parallel_for(out.grid.size(), opts.threads,
                 [&](std::size_t l) { out.fits[l] = fit_point(l, std::nullopt); });
  } else {
    std::optional<Eigen::VectorXd> warm;
    for (std::size_t l = 0; l < out.grid.size(); ++l) {
      out.fits[l] = fit_point(l, opts.warm_start ? warm : std::nullopt);
      if (out.fits[l].usable() && out.fits[l].converged) warm = out.fits[l].theta;
    }
  }
  return out;
}

}  // namespace tailvc

#endif
