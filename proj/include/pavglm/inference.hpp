#pragma once

// Post-fit inference: profiled information matrices for the spline
// coefficients, pointwise bands, coefficient and trajectory simulation, peak
// functionals, credibility q-values and threshold crossings.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "pavglm/estimation.hpp"
#include "pavglm/rng.hpp"

namespace pavglm {

namespace detail {

// sum_n B_{w_n}' (A'(u_n) - T_n) over the group's curves: the gradient of the
// profiled posterior f(c) = min_{u,w} L(c, u, w) (envelope theorem).
inline Eigen::VectorXd profile_gradient(const ModelSpec& spec, const Dataset& data, int group,
                                        const Eigen::VectorXd& coeffs, const LatentState& latents) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(spec.basis.size());
  for (auto n : data.members(group)) {
    const auto& curve = data.curves[n];
    if (curve.size() == 0) continue;
    const auto fam = spec.family_for(curve);
    Eigen::VectorXd resid(curve.size());
    for (int k = 0; k < curve.size(); ++k)
      resid(k) = fam.cumulant_d1(latents[n].u(k), curve.y[k]) - fam.statistic(curve.y[k]);
    g += warped_design(spec, latents[n].w, curve).transpose() * resid;
  }
  return g;
}

inline Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

struct InformationOptions {
  double step = 1e-3;
  double eigen_floor = 1e-10;
  double inner_tol = 1e-10;
  double warp_tol = 1e-10;
};

// Observed information of group j's coefficients: central differences of
// the profiled gradient, with every curve's latents re-optimized (warm from
// `latents`) at each perturbed coefficient vector.
inline Eigen::MatrixXd information_matrix(const ModelSpec& spec, const Dataset& data, const GroupCoefficients& coeffs,
                                          const VarianceParams& vp, const LatentState& latents, int group,
                                          const InformationOptions& opt = {}) {
  const int p = spec.basis.size();
  const auto members = data.members(group);
  if (members.empty()) throw std::invalid_argument("group '" + data.groups.at(group) + "' has no curves");
  FitConfig cfg;
  cfg.inner_tol = opt.inner_tol;
  cfg.warp_tol = opt.warp_tol;
  const auto priors = make_priors(spec, data, vp);

  auto gradient_at = [&](const Eigen::VectorXd& c) {
    LatentState lat = latents;
    for (auto n : members) {
      if (data.curves[n].size() == 0) continue;
      lat[n] = predict_latents(spec, c, data.curves[n], priors[n], cfg, &latents[n]).latent;
    }
    return detail::profile_gradient(spec, data, group, c, lat);
  };

  Eigen::MatrixXd h(p, p);
  std::vector<Eigen::VectorXd> cols(p);
  parallel_for(static_cast<std::size_t>(p), [&](std::size_t i) {
    Eigen::VectorXd plus = coeffs.at(group), minus = coeffs.at(group);
    plus(static_cast<Eigen::Index>(i)) += opt.step;
    minus(static_cast<Eigen::Index>(i)) -= opt.step;
    cols[i] = (gradient_at(plus) - gradient_at(minus)) / (2.0 * opt.step);
  });
  for (int i = 0; i < p; ++i) h.col(i) = cols[i];
  h = 0.5 * (h + h.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < -1e-8 * top) {
    std::ostringstream msg;
    msg << "information matrix of group '" << data.groups[group] << "' is indefinite; eigenvalues:";
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) msg << ' ' << es.eigenvalues()(i);
    throw NumericalError(msg.str());
  }
  return detail::floor_eigenvalues(h, opt.eigen_floor);
}

inline Eigen::MatrixXd information_matrix(const FittedModel& fm, const Dataset& data, int group,
                                          const InformationOptions& opt = {}) {
  return information_matrix(fm.spec, data, fm.coefficients, fm.variance, fm.latents, group, opt);
}

// sum_n B_{w_n}' S_n^{-1} B_{w_n}: the Hessian in c with latents held fixed.
inline Eigen::MatrixXd fixed_latent_information(const ModelSpec& spec, const Dataset& data, const VarianceParams& vp,
                                                const LatentState& latents, int group) {
  const int p = spec.basis.size();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (auto n : data.members(group)) {
    const auto& curve = data.curves[n];
    if (curve.size() == 0) continue;
    const auto prior = CurvePrior::make(spec, curve, vp);
    const Eigen::MatrixXd wb =
        prior.amplitude_factor.triangularView<Eigen::Lower>().solve(warped_design(spec, latents[n].w, curve));
    info += wb.transpose() * wb;
  }
  return info;
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct BandPoint {
  double time = 0.0;  // rescaled
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// theta(t) +- z sqrt(b(t)' I^{-1} b(t)), pointwise.
inline std::vector<BandPoint> confidence_band(const Eigen::VectorXd& coeffs, const Eigen::MatrixXd& info,
                                              const SplineBasis& basis, double level,
                                              const std::vector<double>& grid) {
  if (!(level >= 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must be in [0, 1)");
  const double z = level == 0.0 ? 0.0 : normal_quantile(0.5 + 0.5 * level);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  std::vector<BandPoint> out;
  out.reserve(grid.size());
  for (double t : grid) {
    const Eigen::VectorXd b = basis.design_row(t);
    const double est = b.dot(coeffs);
    const double se = std::sqrt(std::max(0.0, b.dot(ldlt.solve(b))));
    out.push_back({t, est, se, est - z * se, est + z * se});
  }
  return out;
}

inline std::vector<double> uniform_grid(int points) {
  if (points < 2) throw std::invalid_argument("grid needs at least 2 points");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
  return g;
}

inline Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = n01(rng);
  return z;
}

// n_sim draws from N(c, I^{-1}), one per row.
inline Eigen::MatrixXd sample_coefficients(const Eigen::VectorXd& coeffs, const Eigen::MatrixXd& info, int n_sim,
                                           std::uint64_t seed, std::uint64_t stream_index = 0) {
  if (n_sim < 1) throw std::invalid_argument("n_sim must be >= 1");
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) throw NumericalError("information matrix is not positive definite");
  const Eigen::MatrixXd upper = llt.matrixU();
  auto rng = make_stream(seed, "sim-coefficients", stream_index);
  Eigen::MatrixXd draws(n_sim, coeffs.size());
  for (int s = 0; s < n_sim; ++s) {
    // I = L L' so L'^{-1} z has covariance I^{-1}
    const Eigen::VectorXd z = standard_normal(coeffs.size(), rng);
    draws.row(s) = (coeffs + upper.triangularView<Eigen::Upper>().solve(z)).transpose();
  }
  return draws;
}

struct PeakStats {
  double location_hours = 0.0;
  double decrease = 0.0;  // %/h on the intensity scale
  double maximum = 0.0;
  bool peak_at_horizon = false;
};

inline constexpr int kPeakGridPoints = 1201;

// Peak of values on a uniform grid over [0, 1].
inline PeakStats peak_from_grid(const std::vector<double>& values, double horizon = 120.0) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  if (values.size() < 2) throw std::invalid_argument("peak_from_grid needs at least 2 values");
  const auto it = std::max_element(values.begin(), values.end());
  const auto i = static_cast<double>(it - values.begin());
  PeakStats out;
  out.maximum = *it;
  out.location_hours = i / static_cast<double>(values.size() - 1) * horizon;
  if (it == values.end() - 1) {
    out.peak_at_horizon = true;
    out.decrease = 0.0;
  } else {
    out.decrease = (out.maximum - values.back()) / (horizon - out.location_hours) * 100.0;
  }
  return out;
}

inline PeakStats peak_stats(const Eigen::VectorXd& coeffs, const SplineBasis& basis, double horizon = 120.0) {
  const auto grid = uniform_grid(kPeakGridPoints);
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = basis.design_row(grid[i]).dot(coeffs);
  return peak_from_grid(values, horizon);
}

// q = P(X < Y), ties counted one half. Paired compares x_i with y_i;
// otherwise all pairs are compared.
inline double credibility_q(const std::vector<double>& x, const std::vector<double>& y, bool paired = true) {
  if (x.empty() || y.empty()) throw std::invalid_argument("credibility_q needs nonempty samples");
  if (paired) {
    if (x.size() != y.size()) throw std::invalid_argument("paired credibility_q needs equal sample sizes");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] < y[i] ? 1.0 : (x[i] == y[i] ? 0.5 : 0.0);
    return s / static_cast<double>(x.size());
  }
  std::vector<double> ys = y;
  std::sort(ys.begin(), ys.end());
  double s = 0.0;
  for (double v : x) {
    const auto lo = std::lower_bound(ys.begin(), ys.end(), v);
    const auto hi = std::upper_bound(lo, ys.end(), v);
    s += static_cast<double>(ys.end() - hi) + 0.5 * static_cast<double>(hi - lo);
  }
  return s / (static_cast<double>(x.size()) * static_cast<double>(ys.size()));
}

struct TrajectoryOptions {
  int n_traj = 1000;
  int grid_points = 241;  // every 0.5h over 120h
  bool include_amplitude = true;
  bool include_warp = true;
};

struct TrajectorySet {
  std::vector<double> grid;  // rescaled
  Eigen::MatrixXd link;      // n_traj x grid, theta(v(t, w)) + x(t)
  Eigen::MatrixXd intensity() const { return link.array().exp().matrix(); }
};

// Symmetric square root through the eigendecomposition (dense grids make
// smooth kernels numerically singular, which defeats Cholesky).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

inline TrajectorySet simulate_trajectories(const ModelSpec& spec, const Eigen::VectorXd& coeffs,
                                           const VarianceParams& vp, const TrajectoryOptions& opt,
                                           std::uint64_t seed, std::uint64_t stream_index = 0) {
  if (opt.n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  TrajectorySet out;
  out.grid = uniform_grid(opt.grid_points);
  const auto g = static_cast<Eigen::Index>(out.grid.size());
  out.link.resize(opt.n_traj, g);

  Eigen::MatrixXd amp_root;
  if (opt.include_amplitude) {
    Eigen::MatrixXd s(g, g);
    for (Eigen::Index i = 0; i < g; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) s(i, j) = s(j, i) = matern(std::abs(out.grid[i] - out.grid[j]), vp.amplitude);
    amp_root = psd_sqrt(s);
  }
  const Eigen::MatrixXd warp_root = psd_sqrt(warp_prior(spec.warp.anchors, vp.warp_range, vp.warp_scale).values);

  auto rng = make_stream(seed, "sim-trajectories", stream_index);
  for (int s = 0; s < opt.n_traj; ++s) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(spec.warp.size());
    if (opt.include_warp) {
      // non-monotone warp draws are redrawn
      for (int attempt = 0;; ++attempt) {
        w = warp_root * standard_normal(warp_root.cols(), rng);
        try {
          Warp(spec.warp, detail::as_span(w));
          break;
        } catch (const InvalidWarp&) {
          if (attempt > 1000) throw;
        }
      }
    }
    const Warp warp(spec.warp, detail::as_span(w));
    for (Eigen::Index i = 0; i < g; ++i) out.link(s, i) = spec.basis.design_row(warp(out.grid[i])).dot(coeffs);
    if (opt.include_amplitude) out.link.row(s) += (amp_root * standard_normal(amp_root.cols(), rng)).transpose();
  }
  return out;
}

inline std::vector<double> trajectory_peak_hours(const TrajectorySet& traj, double horizon = 120.0) {
  std::vector<double> out;
  for (Eigen::Index s = 0; s < traj.link.rows(); ++s) {
    std::vector<double> row(traj.link.cols());
    for (Eigen::Index i = 0; i < traj.link.cols(); ++i) row[i] = traj.link(s, i);
    out.push_back(peak_from_grid(row, horizon).location_hours);
  }
  return out;
}

struct ThresholdResult {
  double threshold = 0.0;
  std::optional<double> first_hours;  // first grid time with u >= threshold
  double duration_hours = 0.0;        // time with u >= threshold, up to the horizon
};

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 11; ++i) t.push_back(0.5 * i);
  return t;
}

// For one trajectory on a uniform grid over [0, 1]. Duration is the
// trapezoid rule applied to the indicator u >= threshold, so a trajectory
// above the threshold everywhere lasts the full horizon.
inline std::vector<ThresholdResult> threshold_summary(const std::vector<double>& grid,
                                                      const std::vector<double>& link,
                                                      const std::vector<double>& thresholds, double horizon = 120.0) {
  if (grid.size() != link.size() || grid.size() < 2)
    throw std::invalid_argument("threshold_summary: grid and trajectory must match and have >= 2 points");
  std::vector<ThresholdResult> out;
  for (double thr : thresholds) {
    ThresholdResult r;
    r.threshold = thr;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (link[i] >= thr) {
        r.first_hours = grid[i] * horizon;
        break;
      }
    }
    // counted in half intervals so the full span comes out exact
    int halves = 0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) halves += (link[i] >= thr) + (link[i + 1] >= thr);
    r.duration_hours = (grid.back() - grid.front()) * horizon * halves / (2.0 * static_cast<double>(grid.size() - 1));
    out.push_back(r);
  }
  return out;
}

// Group order is taken as coldest first; row hypotheses are directional:
// later peaks and slower decreases at colder temperatures.
struct QRow {
  std::string hypothesis;
  std::string functional;  // "peak" or "slope"
  std::string x;
  std::string y;
  double q = 0.0;  // P(f(x) < f(y))
};

struct GroupPeakSamples {
  std::string group;
  PeakStats estimate;
  std::vector<double> location;  // per coefficient draw
  std::vector<double> decrease;
};

inline GroupPeakSamples peak_samples(const std::string& group, const Eigen::VectorXd& coeffs,
                                     const Eigen::MatrixXd& draws, const SplineBasis& basis, double horizon = 120.0) {
  GroupPeakSamples out;
  out.group = group;
  out.estimate = peak_stats(coeffs, basis, horizon);
  for (Eigen::Index s = 0; s < draws.rows(); ++s) {
    const auto ps = peak_stats(draws.row(s).transpose(), basis, horizon);
    out.location.push_back(ps.location_hours);
    out.decrease.push_back(ps.decrease);
  }
  return out;
}

// groups ordered coldest to warmest
inline std::vector<QRow> q_table(const std::vector<GroupPeakSamples>& groups, bool paired = true) {
  std::vector<QRow> rows;
  for (std::size_t a = 0; a < groups.size(); ++a)
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const auto& cold = groups[a];
      const auto& warm = groups[b];
      rows.push_back({"peak(" + warm.group + ") < peak(" + cold.group + ")", "peak", warm.group, cold.group,
                      credibility_q(warm.location, cold.location, paired)});
    }
  for (std::size_t a = 0; a < groups.size(); ++a)
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const auto& cold = groups[a];
      const auto& warm = groups[b];
      rows.push_back({"slope(" + cold.group + ") < slope(" + warm.group + ")", "slope", cold.group, warm.group,
                      credibility_q(cold.decrease, warm.decrease, paired)});
    }
  return rows;
}

inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace pavglm
