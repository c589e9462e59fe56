#pragma once

// Small dense optimizers used by the estimation code: BFGS with backtracking,
// a coordinate pattern search used as its fallback, and a bounded
// Nelder-Mead simplex.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace pavglm {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BfgsOptions {
  double gradient_tol = 1e-8;
  double function_tol = 1e-14;  // relative
  int max_iterations = 200;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// `fg(x, grad)` returns f(x) and fills grad; may return +inf to reject x.
template <class FG>
OptimResult bfgs(FG&& fg, Eigen::VectorXd x, const Eigen::MatrixXd& inv_hessian0, const BfgsOptions& opt = {}) {
  const auto n = x.size();
  OptimResult res;
  Eigen::VectorXd g(n);
  double f = fg(x, g);
  res.evaluations = 1;
  if (!std::isfinite(f)) throw NumericalError("bfgs: objective not finite at the starting point");
  Eigen::MatrixXd h = inv_hessian0;
  Eigen::VectorXd g_new(n);
  bool restarted = false;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -h * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h = inv_hessian0;
      p = -h * g;
      slope = g.dot(p);
    }
    double t = 1.0;
    double f_new = 0.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + t * p;
      f_new = fg(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // the predicted decrease is below the rounding level of f: stationary
      // to working precision
      if (-slope <= 100.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f))) {
        res.converged = true;
        break;
      }
      if (!restarted) {
        h = inv_hessian0;
        restarted = true;
        continue;
      }
      break;
    }
    restarted = false;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    const double df = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h = (eye - rho * s * yv.transpose()) * h * (eye - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (df <= opt.function_tol * (1.0 + std::abs(f)) && s.lpNorm<Eigen::Infinity>() < 1e-12) {
      res.converged = g.lpNorm<Eigen::Infinity>() < std::sqrt(opt.gradient_tol);
      break;
    }
  }
  res.x = std::move(x);
  res.value = f;
  res.gradient = std::move(g);
  if (res.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tol) res.converged = true;
  return res;
}

// Compass search on f alone; step halves whenever no axis move improves.
template <class F>
OptimResult coordinate_search(F&& f, Eigen::VectorXd x, double step, double min_step = 1e-10,
                              int max_evaluations = 5000) {
  OptimResult res;
  double fx = f(x);
  res.evaluations = 1;
  while (step > min_step && res.evaluations < max_evaluations) {
    bool improved = false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      for (double dir : {1.0, -1.0}) {
        Eigen::VectorXd trial = x;
        trial(i) += dir * step;
        const double ft = f(trial);
        ++res.evaluations;
        if (ft < fx) {
          x = std::move(trial);
          fx = ft;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
    ++res.iterations;
  }
  res.x = std::move(x);
  res.value = fx;
  res.converged = step <= min_step;
  return res;
}

struct NelderMeadOptions {
  int max_evaluations = 200;
  double initial_step = 0.3;
  double value_tol = 1e-8;  // relative spread of simplex values
  double size_tol = 1e-5;
};

// Nelder-Mead with points projected onto the box [lower, upper].
template <class F>
OptimResult nelder_mead(F&& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                        const NelderMeadOptions& opt = {}) {
  const auto n = x0.size();
  auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(lower).cwiseMin(upper).eval(); };
  OptimResult res;
  auto eval = [&](const Eigen::VectorXd& v) {
    ++res.evaluations;
    const double fv = f(v);
    return std::isfinite(fv) ? fv : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(project(x0));
  vals.push_back(eval(pts[0]));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd v = pts[0];
    v(i) += opt.initial_step;
    if (v(i) > upper(i)) v(i) = pts[0](i) - opt.initial_step;
    pts.push_back(project(v));
    vals.push_back(eval(pts.back()));
  }

  std::vector<std::size_t> order(pts.size());
  while (res.evaluations < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    ++res.iterations;

    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).lpNorm<Eigen::Infinity>());
    if (std::isfinite(vals[worst]) &&
        vals[worst] - vals[best] <= opt.value_tol * (1.0 + std::abs(vals[best])) && size < opt.size_tol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc =
        outside ? project(centroid + 0.5 * (xr - centroid)) : project(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = project(pts[best] + 0.5 * (pts[i] - pts[best]));
      vals[i] = eval(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.value = vals[best];
  return res;
}

}  // namespace pavglm
