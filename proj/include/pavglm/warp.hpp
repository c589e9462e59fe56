#pragma once

// Monotone time warps v(., w) on [0, 1].
//
// Knots are (0, 0) and (t_k, t_k + w_k) for the internal anchors t_1 < ... < t_m.
// The interpolant is a cubic Hermite spline with centered-difference slopes
// limited by the Hyman filter, so it is increasing whenever the knot values
// are. Past the last anchor the warp continues linearly with the end slope.
// Knot values are interpolated exactly; only slopes are filtered.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pavglm {

class InvalidWarp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WarpSpec {
  std::vector<double> anchors;

  static WarpSpec equidistant(int m_w = 7) {
    if (m_w < 1) throw std::invalid_argument("warp needs at least one anchor");
    WarpSpec spec;
    for (int k = 1; k <= m_w; ++k) spec.anchors.push_back(static_cast<double>(k) / (m_w + 1));
    return spec;
  }

  int size() const { return static_cast<int>(anchors.size()); }

  void validate() const {
    if (anchors.empty()) throw std::invalid_argument("warp needs at least one anchor");
    for (std::size_t k = 0; k < anchors.size(); ++k) {
      if (!(anchors[k] > 0.0 && anchors[k] < 1.0)) throw std::invalid_argument("warp anchors must lie in (0, 1)");
      if (k > 0 && !(anchors[k] > anchors[k - 1]))
        throw std::invalid_argument("warp anchors must be strictly increasing");
    }
  }
};

class Warp {
 public:
  Warp(const WarpSpec& spec, std::span<const double> w) {
    const int m = spec.size();
    if (static_cast<int>(w.size()) != m)
      throw std::invalid_argument("warp coefficient length " + std::to_string(w.size()) + " != " +
                                  std::to_string(m) + " anchors");
    x_.resize(m + 1);
    y_.resize(m + 1);
    x_[0] = 0.0;
    y_[0] = 0.0;
    for (int k = 0; k < m; ++k) {
      if (!std::isfinite(w[k])) throw InvalidWarp("non-finite warp coefficient");
      x_[k + 1] = spec.anchors[k];
      y_[k + 1] = spec.anchors[k] + w[k];
    }
    for (int i = 1; i <= m; ++i)
      if (!(y_[i] > y_[i - 1])) throw InvalidWarp("warp knot values are not strictly increasing");

    // d(knot value i)/dw is e_{i-1} for i >= 1 and zero for the pinned origin.
    // secant slopes and their gradients
    std::vector<double> secant(m);
    Eigen::MatrixXd secant_grad = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      const double h = x_[i + 1] - x_[i];
      secant[i] = (y_[i + 1] - y_[i]) / h;
      secant_grad(i, i) += 1.0 / h;
      if (i > 0) secant_grad(i, i - 1) -= 1.0 / h;
    }

    slope_.resize(m + 1);
    slope_grad_ = Eigen::MatrixXd::Zero(m + 1, m);
    slope_[0] = secant[0];
    slope_grad_.row(0) = secant_grad.row(0);
    slope_[m] = secant[m - 1];
    slope_grad_.row(m) = secant_grad.row(m - 1);
    for (int i = 1; i < m; ++i) {
      const double span = x_[i + 1] - x_[i - 1];
      slope_[i] = (y_[i + 1] - y_[i - 1]) / span;
      slope_grad_(i, i) += 1.0 / span;
      if (i > 1) slope_grad_(i, i - 2) -= 1.0 / span;
    }

    // Hyman filter
    for (int i = 0; i <= m; ++i) {
      int limiter = i == 0 ? 0 : (i == m ? m - 1 : (secant[i - 1] <= secant[i] ? i - 1 : i));
      const double bound = 3.0 * secant[limiter];
      if (slope_[i] <= 0.0) {
        slope_[i] = 0.0;
        slope_grad_.row(i).setZero();
      } else if (slope_[i] > bound) {
        slope_[i] = bound;
        slope_grad_.row(i) = 3.0 * secant_grad.row(limiter);
      }
    }
  }

  int size() const { return static_cast<int>(x_.size()) - 1; }

  double operator()(double t) const {
    const int m = size();
    if (t <= 0.0) return slope_[0] * t;
    if (t >= x_[m]) return y_[m] + slope_[m] * (t - x_[m]);
    const int i = interval(t);
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[i] + (s3 - 2 * s2 + s) * h * slope_[i] + (-2 * s3 + 3 * s2) * y_[i + 1] +
           (s3 - s2) * h * slope_[i + 1];
  }

  // dv(t)/dt
  double slope(double t) const {
    const int m = size();
    if (t <= 0.0) return slope_[0];
    if (t >= x_[m]) return slope_[m];
    const int i = interval(t);
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s;
    return ((6 * s2 - 6 * s) * y_[i] + (3 * s2 - 4 * s + 1) * h * slope_[i] + (-6 * s2 + 6 * s) * y_[i + 1] +
            (3 * s2 - 2 * s) * h * slope_[i + 1]) /
           h;
  }

  // dv(t)/dw, length m_w
  Eigen::VectorXd gradient(double t) const {
    const int m = size();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    if (t <= 0.0) return slope_grad_.row(0).transpose() * t;
    if (t >= x_[m]) {
      g = slope_grad_.row(m).transpose() * (t - x_[m]);
      g(m - 1) += 1.0;
      return g;
    }
    const int i = interval(t);
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    if (i > 0) g(i - 1) += 2 * s3 - 3 * s2 + 1;
    g(i) += -2 * s3 + 3 * s2;
    g += ((s3 - 2 * s2 + s) * h) * slope_grad_.row(i).transpose();
    g += ((s3 - s2) * h) * slope_grad_.row(i + 1).transpose();
    return g;
  }

  std::span<const double> knot_times() const { return x_; }
  std::span<const double> knot_values() const { return y_; }
  std::span<const double> knot_slopes() const { return slope_; }

 private:
  int interval(double t) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    return static_cast<int>(it - x_.begin()) - 1;
  }

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slope_;
  Eigen::MatrixXd slope_grad_;  // d slope_i / d w_k
};

inline Warp build_warp(const WarpSpec& spec, std::span<const double> w) { return Warp(spec, w); }

// J(i, k) = dv(times_i, w) / dw_k
inline Eigen::MatrixXd warp_jacobian(const WarpSpec& spec, std::span<const double> w,
                                     std::span<const double> times) {
  const Warp warp(spec, w);
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(times.size()), spec.size());
  for (std::size_t i = 0; i < times.size(); ++i) jac.row(static_cast<Eigen::Index>(i)) = warp.gradient(times[i]);
  return jac;
}

}  // namespace pavglm
