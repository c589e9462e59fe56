#pragma once

// Natural cubic spline basis with equidistant knots on [0, 1].
//
// Basis function i is the natural interpolating spline of the i-th unit
// vector at the knots, so a coefficient vector is the curve's value at each
// knot. Outside [0, 1] each function continues linearly (second derivative
// is zero at the boundary knots).

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pavglm {

class SplineBasis {
 public:
  explicit SplineBasis(int n_basis = 11) : n_(n_basis) {
    if (n_basis < 4) throw std::invalid_argument("natural spline basis needs n_basis >= 4");
    h_ = 1.0 / (n_ - 1);
    for (int i = 0; i < n_; ++i) knots_.push_back(i * h_);
    // second derivatives M = G c with M_0 = M_{n-1} = 0:
    // h M_{i-1} + 4h M_i + h M_{i+1} = 6/h (c_{i+1} - 2 c_i + c_{i-1})
    const int k = n_ - 2;
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(k, k);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(k, n_);
    for (int r = 0; r < k; ++r) {
      tri(r, r) = 4.0 * h_;
      if (r > 0) tri(r, r - 1) = h_;
      if (r + 1 < k) tri(r, r + 1) = h_;
      rhs(r, r) = 6.0 / h_;
      rhs(r, r + 1) = -12.0 / h_;
      rhs(r, r + 2) = 6.0 / h_;
    }
    second_ = Eigen::MatrixXd::Zero(n_, n_);
    second_.middleRows(1, k) = tri.partialPivLu().solve(rhs);
  }

  int size() const { return n_; }
  std::span<const double> knots() const { return knots_; }

  Eigen::VectorXd design_row(double t) const {
    if (!std::isfinite(t)) throw std::invalid_argument("design_row: non-finite time");
    if (t < 0.0) return value_row(0, 0.0) + t * slope_row(0, 0.0);
    if (t > 1.0) return value_row(n_ - 2, 1.0) + (t - 1.0) * slope_row(n_ - 2, 1.0);
    return value_row(segment(t), t);
  }

  // d/dt of design_row
  Eigen::VectorXd derivative_row(double t) const {
    if (!std::isfinite(t)) throw std::invalid_argument("derivative_row: non-finite time");
    if (t < 0.0) return slope_row(0, 0.0);
    if (t > 1.0) return slope_row(n_ - 2, 1.0);
    return slope_row(segment(t), t);
  }

  Eigen::MatrixXd design_matrix(std::span<const double> times) const {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(times.size()), n_);
    for (std::size_t i = 0; i < times.size(); ++i) b.row(static_cast<Eigen::Index>(i)) = design_row(times[i]);
    return b;
  }

 private:
  int segment(double t) const {
    int i = static_cast<int>(std::floor(t / h_));
    return std::clamp(i, 0, n_ - 2);
  }

  Eigen::VectorXd value_row(int i, double t) const {
    const double a = (knots_[i + 1] - t) / h_;
    const double b = 1.0 - a;
    Eigen::VectorXd row = ((a * a * a - a) * h_ * h_ / 6.0) * second_.row(i).transpose() +
                          ((b * b * b - b) * h_ * h_ / 6.0) * second_.row(i + 1).transpose();
    row(i) += a;
    row(i + 1) += b;
    return row;
  }

  Eigen::VectorXd slope_row(int i, double t) const {
    const double a = (knots_[i + 1] - t) / h_;
    const double b = 1.0 - a;
    Eigen::VectorXd row = (-(3.0 * a * a - 1.0) * h_ / 6.0) * second_.row(i).transpose() +
                          ((3.0 * b * b - 1.0) * h_ / 6.0) * second_.row(i + 1).transpose();
    row(i) -= 1.0 / h_;
    row(i + 1) += 1.0 / h_;
    return row;
  }

  int n_;
  double h_;
  std::vector<double> knots_;
  Eigen::MatrixXd second_;  // knot second derivatives per unit coefficient
};

inline double theta_eval(std::span<const double> coeffs, const SplineBasis& basis, double t) {
  if (static_cast<int>(coeffs.size()) != basis.size())
    throw std::invalid_argument("coefficient length " + std::to_string(coeffs.size()) + " != basis size " +
                                std::to_string(basis.size()));
  const Eigen::VectorXd row = basis.design_row(t);
  double s = 0.0;
  for (int i = 0; i < basis.size(); ++i) s += row(i) * coeffs[i];
  return s;
}

}  // namespace pavglm
