#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace pavglm;

namespace {

struct Setup {
  ModelSpec spec;
  Dataset data;
  FitConfig cfg;
};

Setup identical_curves(int n) {
  Setup s;
  s.spec.family = ResponseFamily::negative_binomial(18.63);
  VarianceParams vp;
  vp.amplitude = {0.2, 2.0, 0.2};
  vp.warp_scale = 0.02;
  std::mt19937_64 rng(1);
  std::vector<double> times;
  for (int k = 0; k < 16; ++k) times.push_back(k / 15.0);
  const Curve base = support::draw_curve(s.spec, support::bump_coeffs(s.spec.basis, 0.45, 3.0, 1.0), vp, times, rng, "c", "g");
  s.data.groups = {"g"};
  for (int i = 0; i < n; ++i) {
    Curve c = base;
    c.id = "c" + std::to_string(i);
    s.data.curves.push_back(c);
  }
  s.cfg.variance_budget = 40;
  s.cfg.max_outer = 3;
  return s;
}

}  // namespace

TEST(Robustness, TableLayoutAndIdenticalRefits) {
  auto s = identical_curves(4);
  const auto full = fit(s.spec, s.data, s.cfg);
  const auto res = leave_one_out(s.data, full, s.cfg);
  ASSERT_EQ(res.rows.size(), 6u);
  EXPECT_EQ(res.rows[0].parameter, "nb-dispersion");
  EXPECT_EQ(res.rows[5].parameter, "scale_warp");
  ASSERT_EQ(res.refits.size(), 4u);
  for (const auto& r : res.refits) {
    EXPECT_EQ(r.message.find("refit failed"), std::string::npos) << r.message;
    EXPECT_EQ(r.variance.amplitude.scale, res.refits[0].variance.amplitude.scale);
    EXPECT_EQ(r.variance.warp_scale, res.refits[0].variance.warp_scale);
    EXPECT_EQ(r.coefficients[0], res.refits[0].coefficients[0]);
    EXPECT_LE(r.variance.amplitude.smoothness, MaternKernel::kMaxSmoothness);
  }
  for (const auto& row : res.rows) {
    EXPECT_EQ(row.lower, row.upper) << row.parameter;
    EXPECT_EQ(row.refits, 4);
  }
  // dispersion is fixed when no replicate table is given
  EXPECT_EQ(res.rows[0].lower, 18.63);
  EXPECT_EQ(res.rows[0].estimate, 18.63);
}

TEST(Robustness, EnvelopeCoversGrid) {
  auto s = identical_curves(3);
  const auto full = fit(s.spec, s.data, s.cfg);
  const auto res = leave_one_out(s.data, full, s.cfg, nullptr, 25);
  ASSERT_EQ(res.envelopes.size(), 1u);
  const auto& e = res.envelopes[0];
  EXPECT_EQ(e.grid.size(), 25u);
  for (std::size_t i = 0; i < e.grid.size(); ++i) EXPECT_LE(e.lower[i], e.upper[i]);
}

TEST(Robustness, ReplicateTableReestimatesDispersion) {
  const auto sc = like_paper(3);
  const auto synth = synthesize(sc);
  const double r0 = estimate_common_rate(synth.table);
  auto agg = aggregate(synth.table, r0);
  // a 6-curve subset keeps the test quick
  Dataset small;
  small.groups = agg.dataset.groups;
  for (const auto& c : agg.dataset.curves)
    if (c.id.back() == '1' || c.id.back() == '2') small.curves.push_back(c);
  ReplicateTable table;
  for (const auto& r : synth.table.rows)
    if (r.curve_id.back() == '1' || r.curve_id.back() == '2') table.rows.push_back(r);
  ModelSpec spec;
  spec.family = ResponseFamily::negative_binomial(estimate_common_rate(table));
  FitConfig cfg;
  cfg.variance_budget = 40;
  cfg.max_outer = 2;
  const auto full = fit(spec, small, cfg);
  const auto res = leave_one_out(small, full, cfg, &table, 11);
  ASSERT_EQ(res.refits.size(), 6u);
  for (const auto& r : res.refits) {
    EXPECT_TRUE(std::isfinite(r.rate));
    EXPECT_NE(r.rate, spec.family.rate());
  }
  EXPECT_LE(res.rows[0].lower, res.rows[0].upper);
}

TEST(Robustness, NeedsTwoCurves) {
  auto s = identical_curves(2);
  const auto full = fit(s.spec, s.data, s.cfg);
  Dataset one = s.data.without(0);
  EXPECT_THROW(leave_one_out(one, full, s.cfg), std::invalid_argument);
}
