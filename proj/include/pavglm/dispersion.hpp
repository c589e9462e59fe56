#pragma once

// Replicate diagnostics and the common-rate negative binomial model used to
// pick the response family before fitting.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "pavglm/model.hpp"

namespace pavglm {

struct ReplicateRow {
  std::string curve_id;
  std::string group;
  double time = 0.0;  // rescaled
  std::vector<double> counts;
};

struct ReplicateTable {
  std::vector<ReplicateRow> rows;

  void validate() const {
    for (const auto& r : rows)
      for (double c : r.counts)
        if (!(c >= 0.0) || c != std::floor(c) || !std::isfinite(c))
          throw std::domain_error("replicate counts must be nonnegative integers (curve " + r.curve_id + ")");
  }
};

struct MeanVariance {
  std::string curve_id;
  double time = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};

struct MeanVarianceTable {
  std::vector<MeanVariance> rows;
  std::vector<std::string> warnings;  // rows skipped because k < 2
};

inline MeanVarianceTable mean_variance_table(const ReplicateTable& table) {
  table.validate();
  MeanVarianceTable out;
  for (const auto& r : table.rows) {
    const auto k = r.counts.size();
    if (k < 2) {
      out.warnings.push_back("row skipped (curve " + r.curve_id + ", " + std::to_string(k) + " replicate)");
      continue;
    }
    double mean = 0.0;
    for (double c : r.counts) mean += c;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (double c : r.counts) ss += (c - mean) * (c - mean);
    out.rows.push_back({r.curve_id, r.time, mean, ss / static_cast<double>(k - 1)});
  }
  return out;
}

namespace detail {

// Profile NB log-likelihood in log r with every row mean at its sample mean.
inline double profile_rate_nll(const ReplicateTable& table, double log_r) {
  const double r = std::exp(log_r);
  double nll = 0.0;
  for (const auto& row : table.rows) {
    if (row.counts.empty()) continue;
    double mu = 0.0;
    for (double c : row.counts) mu += c;
    mu /= static_cast<double>(row.counts.size());
    const double log_rm = std::log(r + mu);
    for (double y : row.counts) {
      double ll = std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) + r * (log_r - log_rm);
      if (y > 0.0) ll += y * (std::log(mu) - log_rm);
      nll -= ll;
    }
  }
  return nll;
}

}  // namespace detail

inline constexpr double kRateSearchLower = 1e-2;
inline constexpr double kRateSearchUpper = 1e5;

// Maximum profile likelihood estimate of the shared NB rate r0. Returns
// +infinity (use Poisson) when the optimum sits at the upper end of the
// search interval, i.e. no overdispersion is detectable.
inline double estimate_common_rate(const ReplicateTable& table) {
  table.validate();
  bool any_positive = false;
  for (const auto& r : table.rows)
    for (double c : r.counts) any_positive = any_positive || c > 0.0;
  if (!any_positive) throw std::invalid_argument("rate not identifiable: no row has a positive mean");

  const double lo = std::log(kRateSearchLower);
  const double hi = std::log(kRateSearchUpper);
  // golden-section (Brent) search over log r
  const auto [log_r, value] = boost::math::tools::brent_find_minima(
      [&](double x) { return detail::profile_rate_nll(table, x); }, lo, hi, 40);
  (void)value;
  if (log_r > hi - 1e-3) return std::numeric_limits<double>::infinity();
  return std::exp(log_r);
}

struct AggregatedData {
  Dataset dataset;
  ResponseFamily family = ResponseFamily::poisson();  // NB(k r0), or Poisson for the +inf sentinel
  int replicates = 1;
};

// Sums replicate counts per (curve, time). Curves carry replicate_count = k,
// so ModelSpec{family = NB(r0)}.family_for(curve) is NB(k r0).
inline AggregatedData aggregate(const ReplicateTable& table, double r0) {
  table.validate();
  if (!(r0 > 0.0)) throw std::invalid_argument("aggregate: r0 must be > 0");
  Dataset data;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::size_t> reps;
  for (const auto& row : table.rows) {
    if (row.counts.empty()) throw std::invalid_argument("curve " + row.curve_id + ": row without replicates");
    auto [it, fresh] = index.try_emplace(row.curve_id, data.curves.size());
    if (fresh) {
      Curve c;
      c.id = row.curve_id;
      c.group = row.group;
      data.curves.push_back(std::move(c));
      reps[row.curve_id] = row.counts.size();
      if (std::find(data.groups.begin(), data.groups.end(), row.group) == data.groups.end())
        data.groups.push_back(row.group);
    } else if (reps[row.curve_id] != row.counts.size()) {
      throw std::invalid_argument("curve " + row.curve_id + " mixes replicate counts");
    }
    Curve& c = data.curves[it->second];
    if (c.group != row.group) throw std::invalid_argument("curve " + row.curve_id + " appears in two groups");
    double sum = 0.0;
    for (double v : row.counts) sum += v;
    c.times.push_back(row.time);
    c.y.push_back(sum);
  }
  int common = -1;
  for (auto& c : data.curves) {
    // sort by time, keeping counts aligned
    std::vector<std::size_t> order(c.times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return c.times[a] < c.times[b]; });
    std::vector<double> t, y;
    for (auto i : order) {
      t.push_back(c.times[i]);
      y.push_back(c.y[i]);
    }
    c.times = std::move(t);
    c.y = std::move(y);
    c.replicate_count = static_cast<int>(reps[c.id]);
    common = common < 0 ? c.replicate_count : (common == c.replicate_count ? common : 0);
  }
  AggregatedData out{std::move(data),
                     std::isinf(r0) ? ResponseFamily::poisson() : ResponseFamily::negative_binomial(r0 * std::max(common, 1)),
                     std::max(common, 1)};
  return out;
}

}  // namespace pavglm
