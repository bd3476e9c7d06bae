#ifndef TAILVC_KERNELS_HPP
#define TAILVC_KERNELS_HPP

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "tailvc/errors.hpp"

namespace tailvc {

// The two kernel families used by the estimator. The product family is the
// tensor product of 1-D Epanechnikov kernels 0.75(1-u^2) on [-1,1]; the
// spherical family is (2/pi)(1-|u|^2) on the unit disk and only exists for
// dimension 2.
enum class KernelFamily { epanechnikov_product, epanechnikov_spherical };

struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov_product;
  int dimension = 1;
};

// Which form of the curvature matrix used by the sup-deviation centering
// constant to compute. `gradient_outer` is the default
// (1/(2 nu)) * integral of grad K grad K^T, which is symmetric positive
// definite for both families. `second_derivative` is
// (1/(2 nu)) * integral of the Hessian of K, kept only for auditing; it is
// negative definite for these kernels.
enum class XiForm { gradient_outer, second_derivative };

namespace detail {

inline void check_kernel(const KernelSpec& k) {
  if (k.dimension < 0) fail(ErrorKind::invalid_config, "kernel dimension must be >= 0");
  if (k.family == KernelFamily::epanechnikov_spherical && k.dimension != 2)
    fail(ErrorKind::invalid_config, "spherical Epanechnikov kernel requires dimension 2");
}

inline double epanechnikov1(double u) {
  double s = 1.0 - u * u;
  return s > 0.0 ? 0.75 * s : 0.0;
}

}  // namespace detail

// K(u). Dimension 0 is the degenerate no-smoothing case and evaluates to 1.
inline double kernel_eval(const KernelSpec& kernel, const Eigen::VectorXd& u) {
  detail::check_kernel(kernel);
  if (u.size() != kernel.dimension)
    fail(ErrorKind::dimension_mismatch, "kernel argument has wrong length");
  if (kernel.family == KernelFamily::epanechnikov_spherical) {
    double s = 1.0 - u.squaredNorm();
    return s > 0.0 ? (2.0 / std::numbers::pi) * s : 0.0;
  }
  double value = 1.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    value *= detail::epanechnikov1(u[k]);
    if (value == 0.0) return 0.0;
  }
  return value;
}

// nu = integral of K^2.
inline double kernel_nu(const KernelSpec& kernel) {
  detail::check_kernel(kernel);
  if (kernel.family == KernelFamily::epanechnikov_spherical)
    return 4.0 / (3.0 * std::numbers::pi);
  return std::pow(0.6, kernel.dimension);
}

// kappa = integral of u u^T K(u); diagonal for both families.
inline Eigen::MatrixXd kernel_kappa(const KernelSpec& kernel) {
  detail::check_kernel(kernel);
  int q = kernel.dimension;
  if (kernel.family == KernelFamily::epanechnikov_spherical)
    return (1.0 / 6.0) * Eigen::MatrixXd::Identity(q, q);
  return 0.2 * Eigen::MatrixXd::Identity(q, q);
}

// Curvature matrix entering the sup-deviation centering constant. Both forms
// are scalar multiples of the identity for the shipped families; the values
// below are the closed-form integrals (cross terms vanish by symmetry).
inline Eigen::MatrixXd kernel_xi(const KernelSpec& kernel,
                                 XiForm form = XiForm::gradient_outer) {
  detail::check_kernel(kernel);
  int q = kernel.dimension;
  double nu = kernel_nu(kernel);
  double diag = 0.0;
  if (kernel.family == KernelFamily::epanechnikov_spherical) {
    // grad K = -(4/pi) u on the disk: integral of (dK/du1)^2 = 4/pi.
    // Laplacian component integral: -(4/pi) * area = -4.
    diag = (form == XiForm::gradient_outer) ? (4.0 / std::numbers::pi) : -4.0;
  } else {
    // dK/du1 = K'(u1) prod K(u_k): integral of (dK/du1)^2 = 1.5 * 0.6^(q-1);
    // integral of d2K/du1^2 = -3 (independent of q).
    diag = (form == XiForm::gradient_outer) ? 1.5 * std::pow(0.6, q - 1) : -3.0;
  }
  return (diag / (2.0 * nu)) * Eigen::MatrixXd::Identity(q, q);
}

}  // namespace tailvc

#endif
