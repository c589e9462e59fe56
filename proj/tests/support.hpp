#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "pavglm/pavglm.hpp"

namespace pavglm::support {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pavglm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::VectorXd normal_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

// Sorted distinct times in (0, 1].
inline std::vector<double> random_times(std::mt19937_64& rng, int m) {
  std::vector<double> t;
  while (static_cast<int>(t.size()) < m) {
    const double v = uniform(rng, 0.02, 1.0);
    bool close = false;
    for (double s : t) close = close || std::abs(s - v) < 0.01;
    if (!close) t.push_back(v);
  }
  std::sort(t.begin(), t.end());
  return t;
}

// A smooth bump on the link scale, as spline values at the knots.
inline Eigen::VectorXd bump_coeffs(const SplineBasis& basis, double peak, double height, double base = 0.5) {
  Eigen::VectorXd c(basis.size());
  const auto knots = basis.knots();
  for (int i = 0; i < basis.size(); ++i) c(i) = base + height * std::exp(-std::pow((knots[i] - peak) / 0.25, 2));
  return c;
}

// Counts drawn from `family` around theta(v(t, w)) + x(t).
inline Curve draw_curve(const ModelSpec& spec, const Eigen::VectorXd& coeffs, const VarianceParams& vp,
                        const std::vector<double>& times, std::mt19937_64& rng, const std::string& id,
                        const std::string& group, bool latent_noise = true) {
  Curve c;
  c.id = id;
  c.group = group;
  c.times = times;
  c.y.assign(times.size(), 0.0);
  Eigen::VectorXd u = gamma_vector(spec, coeffs, Eigen::VectorXd::Zero(spec.warp.size()), c);
  if (latent_noise) {
    const auto prior = CurvePrior::make(spec, c, vp);
    Eigen::VectorXd w = prior.warp_factor * normal_vector(rng, spec.warp.size());
    try {
      u = gamma_vector(spec, coeffs, w, c);
    } catch (const InvalidWarp&) {
    }
    u += prior.amplitude_factor * normal_vector(rng, c.size());
  }
  const auto fam = spec.family_for(c);
  for (int k = 0; k < c.size(); ++k) c.y[k] = fam.sample(u(k), rng);
  return c;
}

}  // namespace pavglm::support
