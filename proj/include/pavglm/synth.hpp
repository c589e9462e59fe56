#pragma once

// Synthetic replicate count data drawn from the full model: per curve a warp
// w ~ N(0, C) and amplitude x ~ N(0, S), then k replicate counts per time from
// NB(r0) with mean exp(u) / k, so the replicate sum has mean exp(u) and rate
// k r0.

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pavglm/dispersion.hpp"
#include "pavglm/model.hpp"
#include "pavglm/rng.hpp"

namespace pavglm {

struct GroupTruth {
  std::string name;
  Eigen::VectorXd coeffs;  // spline values at the knots
};

struct Truncation {
  std::string curve_id;
  double cut_hour = 0.0;
};

struct SynthConfig {
  std::vector<GroupTruth> groups;
  int curves_per_group = 5;
  std::vector<double> times_hours;
  double horizon = 120.0;
  VarianceParams variance;
  double r0 = 4.658;  // per replicate; +inf draws Poisson counts
  int replicates = 4;
  std::vector<Truncation> truncations;
  std::uint64_t seed = 7;
  ModelSpec spec;

  void validate() const {
    if (groups.empty()) throw std::invalid_argument("synth: no groups");
    if (curves_per_group < 1) throw std::invalid_argument("synth: curves_per_group must be >= 1");
    if (replicates < 1) throw std::invalid_argument("synth: replicates must be >= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("synth: horizon must be > 0");
    if (!(r0 > 0.0)) throw std::invalid_argument("synth: r0 must be > 0");
    if (times_hours.size() < 2) throw std::invalid_argument("synth: need at least two times");
    for (const auto& g : groups)
      if (g.coeffs.size() != spec.basis.size()) throw std::invalid_argument("synth: coefficient length mismatch");
    variance.validate();
  }
};

// Group mean curves with peaks at 70.7h, 43.8h and 35.1h and decreases of
// about 2.1, 5.0 and 9.1 %/h (natural spline values at the 11 knots).
inline std::vector<GroupTruth> like_paper_groups() {
  auto vec = [](std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
  };
  return {
      {"cold", vec({0.4856146947795521, 2.444749889805824, 3.7396223599343537, 4.5928906131606979,
                    5.0999924240273966, 5.3657797849593276, 5.4329531909418849, 5.3475038572720308,
                    5.1325470491866936, 4.8136985577193947, 4.4067287485913473})},
      {"medium", vec({0.37412804745507255, 3.5319219738896539, 4.9333047712928462, 5.5638942563401139,
                      5.6447922679186764, 5.4360390527942153, 4.9849813798143883, 4.3763243204038282,
                      3.6331768970648088, 2.7916739108591528, 1.8671449647355005})},
      {"warm", vec({0.31040505754154246, 4.3456008495321372, 5.6146202353960692, 5.9042800906440034,
                    5.4817813718704631, 4.7401747245162325, 3.7099287388895581, 2.510229802819913,
                    1.1589081232027656, -0.29737633175179035, -1.8444028302556239})},
  };
}

// 3 groups x 5 curves, 16 times every 8h, 4 replicates, r0 = 4.658 and the
// reference variance parameters.
inline SynthConfig like_paper(std::uint64_t seed, bool truncate = false) {
  SynthConfig cfg;
  cfg.groups = like_paper_groups();
  for (int h = 0; h <= 120; h += 8) cfg.times_hours.push_back(h);
  cfg.seed = seed;
  if (truncate) cfg.truncations = {{"medium_2", 48.0}, {"warm_3", 40.0}};
  return cfg;
}

struct SynthCurveTruth {
  std::string id;
  std::string group;
  Eigen::VectorXd w;
  std::vector<double> times;  // rescaled
  Eigen::VectorXd u;
};

struct SynthOutput {
  ReplicateTable table;
  std::vector<SynthCurveTruth> curves;
};

inline Eigen::VectorXd draw_gaussian(const Eigen::MatrixXd& lower, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd z(lower.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
  return lower * z;
}

inline SynthOutput synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const auto family =
      std::isinf(cfg.r0) ? ResponseFamily::poisson() : ResponseFamily::negative_binomial(cfg.r0);
  const Eigen::MatrixXd c_lower =
      CurvePrior::factor(warp_prior(cfg.spec.warp.anchors, cfg.variance.warp_range, cfg.variance.warp_scale).values);
  SynthOutput out;
  int serial = 0;
  for (const auto& g : cfg.groups) {
    for (int i = 1; i <= cfg.curves_per_group; ++i, ++serial) {
      SynthCurveTruth truth;
      truth.id = g.name + "_" + std::to_string(i);
      truth.group = g.name;
      // a curve cancelled at `cut` hours has no measurement from `cut` on
      double cut = std::numeric_limits<double>::infinity();
      for (const auto& tr : cfg.truncations)
        if (tr.curve_id == truth.id) cut = tr.cut_hour;
      for (double h : cfg.times_hours)
        if (h < cut) truth.times.push_back(h / cfg.horizon);

      auto rng = make_stream(cfg.seed, "synth", static_cast<std::uint64_t>(serial));
      // redraw the (rare) warps that fail to be increasing
      for (int attempt = 0;; ++attempt) {
        truth.w = draw_gaussian(c_lower, rng);
        try {
          Warp(cfg.spec.warp, detail::as_span(truth.w));
          break;
        } catch (const InvalidWarp&) {
          if (attempt > 100) throw;
        }
      }
      const Eigen::MatrixXd s_lower =
          CurvePrior::factor(covariance_matrix(truth.times, cfg.variance.amplitude).values);
      Curve shape;
      shape.times = truth.times;
      shape.y.assign(truth.times.size(), 0.0);
      truth.u = gamma_vector(cfg.spec, g.coeffs, truth.w, shape) + draw_gaussian(s_lower, rng);

      const double log_k = std::log(static_cast<double>(cfg.replicates));
      for (std::size_t k = 0; k < truth.times.size(); ++k) {
        ReplicateRow row{truth.id, g.name, truth.times[k], {}};
        for (int rep = 0; rep < cfg.replicates; ++rep) row.counts.push_back(family.sample(truth.u(k) - log_k, rng));
        out.table.rows.push_back(std::move(row));
      }
      out.curves.push_back(std::move(truth));
    }
  }
  return out;
}

}  // namespace pavglm
