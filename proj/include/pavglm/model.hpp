#pragma once

// Latent curve model
//
//   u_n(t) = theta_{f(n)}(v_n(t)) + x_n(t),   y_nk | u_n ~ p(. | u_n(t_nk))
//
// with theta_j a natural spline, v_n a monotone warp driven by w_n ~ N(0, C)
// and x_n a zero-mean Matern process. The amplitude covariance S_n is taken at
// the observed times t_nk.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pavglm/basis.hpp"
#include "pavglm/kernels.hpp"
#include "pavglm/response.hpp"
#include "pavglm/warp.hpp"

namespace pavglm {

struct Curve {
  std::string id;
  std::string group;
  std::vector<double> times;  // rescaled to [0, 1]
  std::vector<double> y;
  int replicate_count = 1;

  int size() const { return static_cast<int>(times.size()); }

  void validate() const {
    if (times.size() != y.size())
      throw std::invalid_argument("curve " + id + ": " + std::to_string(times.size()) + " times but " +
                                  std::to_string(y.size()) + " observations");
    if (times.size() < 2) throw std::invalid_argument("curve " + id + " has fewer than 2 observations");
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (!std::isfinite(times[k])) throw std::invalid_argument("curve " + id + ": non-finite time");
      if (k > 0 && !(times[k] > times[k - 1]))
        throw std::invalid_argument("curve " + id + ": times are not strictly increasing");
    }
    if (replicate_count < 1) throw std::invalid_argument("curve " + id + ": replicate_count must be >= 1");
  }
};

struct Dataset {
  std::vector<std::string> groups;
  std::vector<Curve> curves;

  int group_index(const std::string& label) const {
    auto it = std::find(groups.begin(), groups.end(), label);
    if (it == groups.end()) throw std::invalid_argument("unknown group '" + label + "'");
    return static_cast<int>(it - groups.begin());
  }
  int group_of(std::size_t n) const { return group_index(curves.at(n).group); }

  std::vector<std::size_t> members(int group) const {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < curves.size(); ++n)
      if (group_of(n) == group) out.push_back(n);
    return out;
  }

  void validate() const {
    if (curves.empty()) throw std::invalid_argument("dataset has no curves");
    for (const auto& c : curves) {
      c.validate();
      group_index(c.group);
    }
  }

  Dataset without(std::size_t n) const {
    Dataset out = *this;
    out.curves.erase(out.curves.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
};

struct VarianceParams {
  MaternKernel amplitude{0.072, 7.21, 0.458};
  double warp_range = 0.083;
  double warp_scale = 0.026;

  MaternKernel warp_kernel() const { return {warp_scale, kWarpSmoothness, warp_range}; }

  void validate() const {
    amplitude.validate();
    if (amplitude.smoothness > MaternKernel::kMaxSmoothness)
      throw std::invalid_argument("amplitude smoothness above the upper bound of 10");
    warp_kernel().validate();
  }
};

struct ModelSpec {
  ResponseFamily family = ResponseFamily::negative_binomial(4.658);  // per replicate
  SplineBasis basis{11};
  WarpSpec warp = WarpSpec::equidistant(7);

  ResponseFamily family_for(const Curve& curve) const { return family.aggregated(curve.replicate_count); }
};

struct CurveLatent {
  Eigen::VectorXd u;  // link scale, one per observation
  Eigen::VectorXd w;  // warp coefficients
};

using LatentState = std::vector<CurveLatent>;
using GroupCoefficients = std::vector<Eigen::VectorXd>;

// S_n and C with their lower Cholesky factors.
struct CurvePrior {
  Eigen::MatrixXd amplitude;
  Eigen::MatrixXd amplitude_factor;
  Eigen::MatrixXd warp;
  Eigen::MatrixXd warp_factor;

  static CurvePrior make(const ModelSpec& spec, const Curve& curve, const VarianceParams& vp) {
    CurvePrior p;
    if (curve.size() > 0) {
      p.amplitude = covariance_matrix(curve.times, vp.amplitude).values;
      p.amplitude_factor = factor(p.amplitude);
    }
    p.warp = warp_prior(spec.warp.anchors, vp.warp_range, vp.warp_scale).values;
    p.warp_factor = factor(p.warp);
    return p;
  }

  static Eigen::MatrixXd factor(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw IllConditioned("covariance matrix is not positive definite");
    return llt.matrixL();
  }
};

namespace detail {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// x' M^{-1} x through the lower factor L of M.
inline double inv_quad(const Eigen::MatrixXd& lower, const Eigen::VectorXd& x) {
  return lower.triangularView<Eigen::Lower>().solve(x).squaredNorm();
}

inline Eigen::VectorXd statistics(const ResponseFamily& family, const Curve& curve) {
  Eigen::VectorXd s(curve.size());
  for (int k = 0; k < curve.size(); ++k) s(k) = family.statistic(curve.y[k]);
  return s;
}

}  // namespace detail

// gamma_w = { theta(v(t_k, w)) }
inline Eigen::VectorXd gamma_vector(const ModelSpec& spec, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& w,
                                    const Curve& curve) {
  if (coeffs.size() != spec.basis.size()) throw std::invalid_argument("coefficient length does not match basis");
  const Warp warp(spec.warp, detail::as_span(w));
  Eigen::VectorXd g(curve.size());
  for (int k = 0; k < curve.size(); ++k) g(k) = spec.basis.design_row(warp(curve.times[k])).dot(coeffs);
  return g;
}

// Design matrix of theta at the warped observation times.
inline Eigen::MatrixXd warped_design(const ModelSpec& spec, const Eigen::VectorXd& w, const Curve& curve) {
  const Warp warp(spec.warp, detail::as_span(w));
  Eigen::MatrixXd b(curve.size(), spec.basis.size());
  for (int k = 0; k < curve.size(); ++k) b.row(k) = spec.basis.design_row(warp(curve.times[k]));
  return b;
}

// d gamma_w / dw, size m_n x m_w
inline Eigen::MatrixXd gamma_jacobian(const ModelSpec& spec, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& w,
                                      const Curve& curve) {
  const Warp warp(spec.warp, detail::as_span(w));
  Eigen::MatrixXd jac(curve.size(), spec.warp.size());
  for (int k = 0; k < curve.size(); ++k) {
    const double v = warp(curve.times[k]);
    const double dtheta = spec.basis.derivative_row(v).dot(coeffs);
    jac.row(k) = dtheta * warp.gradient(curve.times[k]).transpose();
  }
  return jac;
}

// sum_k A(u_k, y_k) - u_k T(y_k)
inline double data_term(const ResponseFamily& family, const Curve& curve, const Eigen::VectorXd& u) {
  double s = 0.0;
  for (int k = 0; k < curve.size(); ++k) s += family.cumulant(u(k), curve.y[k]) - u(k) * family.statistic(curve.y[k]);
  return s;
}

// Joint posterior negative log-likelihood of (u, w) for one curve, without
// log-determinant terms. Returns +inf for warps that are not monotone.
inline double posterior_nll(const ModelSpec& spec, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& u,
                            const Eigen::VectorXd& w, const Curve& curve, const CurvePrior& prior) {
  if (u.size() != curve.size()) throw std::invalid_argument("latent u length does not match curve");
  Eigen::VectorXd gamma;
  try {
    gamma = gamma_vector(spec, coeffs, w, curve);
  } catch (const InvalidWarp&) {
    return std::numeric_limits<double>::infinity();
  }
  const ResponseFamily family = spec.family_for(curve);
  return data_term(family, curve, u) + 0.5 * detail::inv_quad(prior.amplitude_factor, gamma - u) +
         0.5 * detail::inv_quad(prior.warp_factor, w);
}

struct GradHess {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Gradient and Hessian of posterior_nll in u at fixed w:
//   grad = A'(u) - T(y) + S^{-1}(u - gamma_w),  H = diag(A''(u)) + S^{-1}
inline GradHess posterior_grad_hess_u(const ModelSpec& spec, const Eigen::VectorXd& coeffs, const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& w, const Curve& curve, const CurvePrior& prior) {
  const ResponseFamily family = spec.family_for(curve);
  const Eigen::VectorXd gamma = gamma_vector(spec, coeffs, w, curve);
  Eigen::LLT<Eigen::MatrixXd> llt(prior.amplitude);
  const Eigen::MatrixXd s_inv = llt.solve(Eigen::MatrixXd::Identity(curve.size(), curve.size()));
  GradHess out;
  out.gradient = s_inv * (u - gamma);
  out.hessian = s_inv;
  for (int k = 0; k < curve.size(); ++k) {
    out.gradient(k) += family.cumulant_d1(u(k), curve.y[k]) - family.statistic(curve.y[k]);
    out.hessian(k, k) += family.cumulant_d2(u(k), curve.y[k]);
  }
  return out;
}

}  // namespace pavglm
