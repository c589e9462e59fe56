#pragma once

// Leave-one-curve-out refits: parameter ranges and mean-curve envelopes.

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pavglm/dispersion.hpp"
#include "pavglm/estimation.hpp"
#include "pavglm/inference.hpp"

namespace pavglm {

struct LooRow {
  std::string parameter;
  double lower = 0.0;  // min over refits
  double estimate = 0.0;
  double upper = 0.0;  // max over refits
  int refits = 0;      // refits contributing to the range
};

struct LooRefit {
  std::string left_out;
  bool converged = false;
  std::string message;
  double rate = 0.0;  // per-replicate r0 used by the refit
  VarianceParams variance;
  GroupCoefficients coefficients;
};

struct GroupEnvelope {
  std::string group;
  std::vector<double> grid;  // rescaled
  std::vector<double> full;
  std::vector<double> lower;
  std::vector<double> upper;
  int violations = 0;  // grid points where the full fit leaves [lower, upper]
};

struct LooResult {
  std::vector<LooRow> rows;
  std::vector<LooRefit> refits;
  std::vector<GroupEnvelope> envelopes;
  bool all_converged = true;
};

inline std::vector<double> variance_row_values(const VarianceParams& vp) {
  return {vp.amplitude.range, vp.amplitude.smoothness, vp.amplitude.scale, vp.warp_range, vp.warp_scale};
}

inline const std::vector<std::string>& loo_parameter_names() {
  static const std::vector<std::string> names{"nb-dispersion", "range_amp", "smoothness_amp",
                                              "scale_amp",     "range_warp", "scale_warp"};
  return names;
}

inline ReplicateTable table_without(const ReplicateTable& table, const std::string& curve_id) {
  ReplicateTable out;
  for (const auto& r : table.rows)
    if (r.curve_id != curve_id) out.rows.push_back(r);
  return out;
}

// Refits with each curve removed in turn, warm-started at `full`. With a
// replicate table the per-replicate rate is re-estimated for every refit;
// otherwise it stays at the full-fit value.
inline LooResult leave_one_out(const Dataset& data, const FittedModel& full, const FitConfig& cfg,
                               const ReplicateTable* replicates = nullptr, int grid_points = 121) {
  if (data.curves.size() < 2) throw std::invalid_argument("leave-one-out needs at least 2 curves");
  const double full_rate = full.spec.family.kind() == FamilyKind::negative_binomial
                               ? full.spec.family.rate()
                               : std::numeric_limits<double>::infinity();

  LooResult out;
  out.refits.resize(data.curves.size());
  parallel_for(data.curves.size(), [&](std::size_t n) {
    LooRefit& refit = out.refits[n];
    refit.left_out = data.curves[n].id;
    ModelSpec spec = full.spec;
    refit.rate = full_rate;
    try {
      if (replicates != nullptr) {
        refit.rate = estimate_common_rate(table_without(*replicates, refit.left_out));
        spec.family = std::isinf(refit.rate) ? ResponseFamily::poisson() : ResponseFamily::negative_binomial(refit.rate);
      }
      const Dataset reduced = data.without(n);
      const FittedModel fm = fit(spec, reduced, cfg, &full);
      refit.converged = fm.diagnostics.converged;
      refit.message = fm.diagnostics.message;
      refit.variance = fm.variance;
      refit.coefficients = fm.coefficients;
    } catch (const std::exception& e) {
      refit.converged = false;
      refit.message = std::string("refit failed: ") + e.what();
    }
  });

  std::vector<double> estimates{full_rate};
  for (double v : variance_row_values(full.variance)) estimates.push_back(v);
  for (std::size_t p = 0; p < estimates.size(); ++p) {
    LooRow row{loo_parameter_names()[p], std::numeric_limits<double>::infinity(), estimates[p],
               -std::numeric_limits<double>::infinity(), 0};
    for (const auto& r : out.refits) {
      if (r.coefficients.empty()) continue;
      const double v = p == 0 ? r.rate : variance_row_values(r.variance)[p - 1];
      row.lower = std::min(row.lower, v);
      row.upper = std::max(row.upper, v);
      ++row.refits;
    }
    out.rows.push_back(row);
  }
  for (const auto& r : out.refits) out.all_converged = out.all_converged && r.converged;

  const auto grid = uniform_grid(grid_points);
  for (std::size_t j = 0; j < full.groups.size(); ++j) {
    GroupEnvelope env;
    env.group = full.groups[j];
    env.grid = grid;
    for (double t : grid) {
      const Eigen::VectorXd b = full.spec.basis.design_row(t);
      const double f = b.dot(full.coefficients[j]);
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& r : out.refits) {
        if (r.coefficients.size() != full.groups.size()) continue;
        const double v = b.dot(r.coefficients[j]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      env.full.push_back(f);
      env.lower.push_back(lo);
      env.upper.push_back(hi);
      if (f < lo || f > hi) ++env.violations;
    }
    out.envelopes.push_back(std::move(env));
  }
  return out;
}

}  // namespace pavglm
