#pragma once

// Matern covariance in the parametrization
//
//   k(d) = sigma^2 * 2^(1-alpha) / Gamma(alpha) * (alpha d / kappa)^alpha * K_alpha(alpha d / kappa)
//
// Note the argument is alpha*d/kappa rather than the more common
// sqrt(2 alpha) d / kappa, so kappa is not directly comparable with other
// Matern parametrizations. With alpha = 1/2 this is exp(-d / (2 kappa)), with
// alpha = 3/2 it is (1 + x) exp(-x), x = 1.5 d / kappa.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pavglm {

class IllConditioned : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaternKernel {
  double scale = 1.0;       // sigma, amplitude units
  double smoothness = 1.5;  // alpha
  double range = 1.0;       // kappa, rescaled-time units

  static constexpr double kMaxSmoothness = 10.0;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("Matern scale must be > 0");
    if (!(smoothness > 0.0) || !std::isfinite(smoothness))
      throw std::invalid_argument("Matern smoothness must be > 0");
    if (!(range > 0.0) || !std::isfinite(range)) throw std::invalid_argument("Matern range must be > 0");
  }

  double variance() const { return scale * scale; }
};

// General path through the modified Bessel function of the second kind.
inline double matern_bessel(double lag, const MaternKernel& k) {
  if (!std::isfinite(lag) || lag < 0.0) throw std::invalid_argument("Matern lag must be finite and >= 0");
  const double var = k.variance();
  if (lag == 0.0) return var;
  const double x = k.smoothness * lag / k.range;
  const double bessel = std::cyl_bessel_k(k.smoothness, x);
  if (bessel == 0.0) return 0.0;
  // x^alpha K_alpha(x) -> 2^(alpha-1) Gamma(alpha) as x -> 0
  if (!std::isfinite(bessel)) return var;
  const double log_value = (1.0 - k.smoothness) * std::log(2.0) - std::lgamma(k.smoothness) +
                           k.smoothness * std::log(x) + std::log(bessel);
  return var * std::exp(log_value);
}

inline double matern(double lag, const MaternKernel& k) {
  if (!std::isfinite(lag) || lag < 0.0) throw std::invalid_argument("Matern lag must be finite and >= 0");
  const double var = k.variance();
  if (lag == 0.0) return var;
  const double x = k.smoothness * lag / k.range;
  if (k.smoothness == 0.5) return var * std::exp(-x);
  if (k.smoothness == 1.5) return var * (1.0 + x) * std::exp(-x);
  return matern_bessel(lag, k);
}

struct CovarianceMatrix {
  Eigen::MatrixXd values;
  double jitter = 0.0;  // diagonal inflation actually applied
};

// Kernel matrix on `times`, inflated on the diagonal only if the Cholesky
// factorization fails: 1e-10 sigma^2 doubling up to 1e-6 sigma^2.
inline CovarianceMatrix covariance_matrix(std::span<const double> times, const MaternKernel& kernel) {
  kernel.validate();
  if (times.empty()) throw std::invalid_argument("covariance_matrix needs at least one time");
  const auto n = static_cast<Eigen::Index>(times.size());
  for (double t : times)
    if (!std::isfinite(t)) throw std::invalid_argument("covariance_matrix: non-finite time");
  CovarianceMatrix out;
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i, i) = kernel.variance();
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = matern(std::abs(times[i] - times[j]), kernel);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  if (Eigen::LLT<Eigen::MatrixXd>(out.values).info() == Eigen::Success) return out;

  const double var = kernel.variance();
  for (double jitter = 1e-10 * var; jitter <= 1e-6 * var * (1.0 + 1e-12); jitter *= 2.0) {
    Eigen::MatrixXd m = out.values;
    m.diagonal().array() += jitter;
    if (Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success) {
      out.values = std::move(m);
      out.jitter = jitter;
      return out;
    }
  }
  throw IllConditioned("covariance matrix not positive definite with jitter up to 1e-6 sigma^2 (scale=" +
                       std::to_string(kernel.scale) + ", smoothness=" + std::to_string(kernel.smoothness) +
                       ", range=" + std::to_string(kernel.range) + ")");
}

inline constexpr double kWarpSmoothness = 1.5;

// Prior covariance of the warp anchor displacements (integrated OU process).
inline CovarianceMatrix warp_prior(std::span<const double> anchors, double range, double scale) {
  for (std::size_t i = 1; i < anchors.size(); ++i)
    if (!(anchors[i] > anchors[i - 1])) throw std::invalid_argument("warp anchors must be strictly increasing");
  return covariance_matrix(anchors, MaternKernel{scale, kWarpSmoothness, range});
}

}  // namespace pavglm
