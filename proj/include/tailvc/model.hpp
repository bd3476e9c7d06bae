#ifndef TAILVC_MODEL_HPP
#define TAILVC_MODEL_HPP

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tailvc/errors.hpp"
#include "tailvc/kernels.hpp"

namespace tailvc {

// One regression row: positive response y, p linear covariates x and q
// smoothing covariates t.
struct Observation {
  double y = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd t;
};

// Column-major sample storage. All rows share the covariate dimensions; the
// struct is immutable by convention once validated and may be shared freely
// across threads.
struct Dataset {
  Eigen::VectorXd y;  // n
  Eigen::MatrixXd x;  // n x p
  Eigen::MatrixXd t;  // n x q

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return x.cols(); }
  Eigen::Index q() const { return t.cols(); }

  Observation row(Eigen::Index i) const {
    return Observation{y[i], x.row(i).transpose(), t.row(i).transpose()};
  }

  static Dataset from_rows(const std::vector<Observation>& rows) {
    if (rows.empty()) fail(ErrorKind::empty_dataset, "no observations");
    Dataset d;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index p = rows.front().x.size();
    const Eigen::Index q = rows.front().t.size();
    d.y.resize(n);
    d.x.resize(n, p);
    d.t.resize(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (rows[i].x.size() != p || rows[i].t.size() != q)
        fail(ErrorKind::dimension_mismatch, "rows disagree on covariate dimensions");
      d.y[i] = rows[i].y;
      d.x.row(i) = rows[i].x.transpose();
      d.t.row(i) = rows[i].t.transpose();
    }
    return d;
  }
};

// Everything the weighted likelihood needs besides data: kernel, bandwidth
// diagonal, threshold and whether the design row carries a leading 1.
struct FitConfig {
  KernelSpec kernel;
  Eigen::VectorXd bandwidths;  // length q, diagonal of H
  double threshold = 0.0;      // omega
  bool include_intercept = true;
};

inline Eigen::Index design_dim(const Dataset& data, const FitConfig& cfg) {
  return data.p() + (cfg.include_intercept ? 1 : 0);
}

// Checks dataset invariants and returns the dataset unchanged. Idempotent.
inline const Dataset& validate_dataset(const Dataset& data) {
  if (data.n() == 0) fail(ErrorKind::empty_dataset, "dataset has no rows");
  if (data.x.rows() != data.n() || data.t.rows() != data.n())
    fail(ErrorKind::dimension_mismatch, "x/t row counts disagree with y");
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!(data.y[i] > 0.0) || !std::isfinite(data.y[i]))
      fail(ErrorKind::non_positive_response,
           "y must be finite and strictly positive (row " + std::to_string(i) + ")");
  }
  if (!data.x.allFinite() || !data.t.allFinite())
    fail(ErrorKind::dimension_mismatch, "covariates contain non-finite entries");
  return data;
}

inline void check_fit_config(const Dataset& data, const FitConfig& cfg) {
  if (cfg.bandwidths.size() != data.q())
    fail(ErrorKind::dimension_mismatch, "bandwidth vector length != q");
  for (Eigen::Index k = 0; k < cfg.bandwidths.size(); ++k)
    if (!(cfg.bandwidths[k] > 0.0))
      fail(ErrorKind::invalid_config, "bandwidths must be positive");
  if (!(cfg.threshold > 0.0)) fail(ErrorKind::invalid_config, "threshold must be positive");
  if (cfg.kernel.dimension != data.q())
    fail(ErrorKind::dimension_mismatch, "kernel dimension != q");
  if (design_dim(data, cfg) < 1)
    fail(ErrorKind::invalid_config, "model has no coefficients (p = 0 without intercept)");
}

// Per-coordinate affine map taking the observed t range onto [0,1]. Results
// can be reported on the original scale through from_unit.
struct TRescaling {
  Eigen::VectorXd offset;  // per-coordinate minimum
  Eigen::VectorXd scale;   // per-coordinate range

  Eigen::VectorXd to_unit(const Eigen::VectorXd& t_original) const {
    return (t_original - offset).cwiseQuotient(scale);
  }
  Eigen::VectorXd from_unit(const Eigen::VectorXd& t_unit) const {
    return offset + t_unit.cwiseProduct(scale);
  }
  static TRescaling identity(Eigen::Index q) {
    return TRescaling{Eigen::VectorXd::Zero(q), Eigen::VectorXd::Ones(q)};
  }
};

// Maps each t coordinate by (t - min)/(max - min) onto [0,1]. The grid, the
// bandwidths and the test constants all live on this rescaled scale.
inline std::pair<Dataset, TRescaling> rescale_t_to_unit_cube(const Dataset& data) {
  Dataset out = data;
  TRescaling map;
  const Eigen::Index q = data.q();
  map.offset.resize(q);
  map.scale.resize(q);
  for (Eigen::Index k = 0; k < q; ++k) {
    double lo = data.t.col(k).minCoeff();
    double hi = data.t.col(k).maxCoeff();
    if (!(hi > lo))
      fail(ErrorKind::degenerate_coordinate,
           "t coordinate " + std::to_string(k) + " has zero sample range");
    map.offset[k] = lo;
    map.scale[k] = hi - lo;
    out.t.col(k) = (data.t.col(k).array() - lo) / (hi - lo);
  }
  return {std::move(out), std::move(map)};
}

// Reason a local fit could not be produced. `none` means theta is valid
// (possibly with converged == false when the iteration cap was hit).
enum class FitFailure { none, no_local_exceedances, insufficient_local_data, singular_hessian };

// Estimated coefficient vector at one location, with solver metadata.
struct CoefficientFit {
  Eigen::VectorXd location;  // q
  Eigen::VectorXd theta;     // d
  double local_exceedance_weight = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  FitFailure failure = FitFailure::none;

  bool usable() const { return failure == FitFailure::none; }
};

// Fits over an equally spaced lattice on [0,1]^q, the substrate for testing
// and plotting. grid[l] and fits[l] correspond.
struct GridFit {
  std::vector<Eigen::VectorXd> grid;
  std::vector<CoefficientFit> fits;
  FitConfig config;

  Eigen::Index size() const { return static_cast<Eigen::Index>(grid.size()); }
};

// Equally spaced lattice: L points on [0,1] per axis, full cross product for
// q > 1 (last axis fastest).
inline std::vector<Eigen::VectorXd> make_grid(Eigen::Index q, Eigen::Index points_per_axis) {
  if (points_per_axis < 2) fail(ErrorKind::invalid_config, "grid needs at least 2 points per axis");
  if (q < 1) fail(ErrorKind::invalid_config, "grid requires q >= 1");
  std::vector<Eigen::VectorXd> grid;
  Eigen::Index total = 1;
  for (Eigen::Index k = 0; k < q; ++k) total *= points_per_axis;
  grid.reserve(total);
  Eigen::VectorXd point(q);
  std::vector<Eigen::Index> idx(q, 0);
  for (Eigen::Index flat = 0; flat < total; ++flat) {
    Eigen::Index rem = flat;
    for (Eigen::Index k = q - 1; k >= 0; --k) {
      idx[k] = rem % points_per_axis;
      rem /= points_per_axis;
    }
    for (Eigen::Index k = 0; k < q; ++k)
      point[k] = static_cast<double>(idx[k]) / static_cast<double>(points_per_axis - 1);
    grid.push_back(point);
  }
  return grid;
}

}  // namespace tailvc

#endif
