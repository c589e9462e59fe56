#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace pavglm;

namespace {

std::string error_of(const std::string& csv, const std::vector<std::string>& groups = {}) {
  std::istringstream in(csv);
  try {
    read_replicates(in, 120.0, groups);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

const char* kHeader = "curve_id,group,time_hours,count,replicate\n";

}  // namespace

TEST(Io, ReferenceShapedTableAggregatesToCells) {
  const auto synth = synthesize(like_paper(7));
  std::ostringstream out;
  write_replicates(out, synth.table);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 961);
  std::istringstream in(text);
  const auto table = read_replicates(in);
  ASSERT_EQ(table.rows.size(), 240u);
  for (const auto& r : table.rows) EXPECT_EQ(r.counts.size(), 4u);
  const auto agg = aggregate(table, 4.658);
  EXPECT_EQ(agg.dataset.curves.size(), 15u);
  EXPECT_EQ(agg.dataset.groups.size(), 3u);
  for (const auto& c : agg.dataset.curves) {
    EXPECT_EQ(c.size(), 16);
    EXPECT_EQ(c.replicate_count, 4);
  }
}

TEST(Io, RoundTripIsByteIdentical) {
  const auto synth = synthesize(like_paper(11, true));
  std::ostringstream first;
  write_replicates(first, synth.table);
  std::istringstream in(first.str());
  std::ostringstream second;
  write_replicates(second, read_replicates(in));
  EXPECT_EQ(first.str(), second.str());

  const auto agg = aggregate(synth.table, 4.658);
  std::ostringstream a1;
  write_aggregated(a1, agg.dataset);
  std::istringstream ain(a1.str());
  std::ostringstream a2;
  write_aggregated(a2, read_aggregated(ain));
  EXPECT_EQ(a1.str(), a2.str());
}

TEST(Io, TruncatedCurvesKeepOnlyEarlierTimes) {
  const auto synth = synthesize(like_paper(7, true));
  const auto agg = aggregate(synth.table, 4.658);
  for (const auto& c : agg.dataset.curves) {
    if (c.id == "medium_2") {
      EXPECT_EQ(c.size(), 6);
      EXPECT_NEAR(c.times.back() * 120.0, 40.0, 1e-9);
    } else if (c.id == "warm_3") {
      EXPECT_EQ(c.size(), 5);
    } else {
      EXPECT_EQ(c.size(), 16) << c.id;
    }
  }
}

TEST(Io, EmptyFileHasNoRows) {
  EXPECT_EQ(error_of(""), "no rows");
  EXPECT_EQ(error_of(kHeader), "no rows");
}

TEST(Io, ColumnErrors) {
  EXPECT_NE(error_of("curve_id,group,time_hours,count\na,g,0,1\n").find("missing required column 'replicate'"),
            std::string::npos);
  EXPECT_NE(error_of("curve_id,group,time_hours,count,replicate,x\na,g,0,1,1,2\n").find("unexpected column 'x'"),
            std::string::npos);
  EXPECT_NE(error_of(std::string(kHeader) + "a,g,0,1\n").find("row 2: expected 5 fields"), std::string::npos);
}

TEST(Io, RowErrorsNameTheRow) {
  const std::string h = kHeader;
  EXPECT_EQ(error_of(h + "a,g,0,1,1\na,g,0,2,1\n"), "row 3: duplicate (curve, time, replicate) key");
  EXPECT_EQ(error_of(h + "a,g,0,1,1\na,g,8,-2,1\n"), "row 3: negative count");
  EXPECT_EQ(error_of(h + "a,g,0,1.5,1\n"), "row 2: count is not an integer");
  EXPECT_EQ(error_of(h + "a,g,0,1,1\nb,x,0,1,1\n", {"g"}), "row 3: unknown group 'x'");
  EXPECT_EQ(error_of(h + "a,g,0,1,1\na,h,8,1,1\n"), "row 3: curve 'a' appears in two groups");
  EXPECT_NE(error_of(h + "a,g,zero,1,1\n").find("row 2"), std::string::npos);
  EXPECT_EQ(error_of(h + "a,g,-8,1,1\n"), "row 2: negative time");
}

TEST(Io, AggregatedReadsReplicateColumn) {
  std::istringstream in("curve_id,group,time_hours,count,replicates\na,g,8,3,4\na,g,0,5,4\nb,h,0,1,4\nb,h,8,0,4\n");
  const auto data = read_aggregated(in);
  ASSERT_EQ(data.curves.size(), 2u);
  EXPECT_EQ(data.curves[0].replicate_count, 4);
  EXPECT_EQ(data.curves[0].y, (std::vector<double>{5, 3}));
  std::istringstream plain("curve_id,group,time_hours,count\na,g,0,5\na,g,8,3\n");
  EXPECT_EQ(read_aggregated(plain).curves[0].replicate_count, 1);
  std::istringstream mixed("curve_id,group,time_hours,count,replicates\na,g,0,5,4\na,g,8,3,2\n");
  EXPECT_THROW(read_aggregated(mixed), InputError);
}

TEST(Io, MissingFileIsAnInputError) {
  EXPECT_THROW(read_replicates_file("/nonexistent/counts.csv"), InputError);
}

TEST(Io, ModelJsonRoundTrip) {
  ModelSpec spec;
  spec.family = ResponseFamily::negative_binomial(18.632);
  spec.basis = SplineBasis(6);
  VarianceParams vp;
  vp.amplitude = {0.1, 2.0, 0.3};
  vp.warp_scale = 0.02;
  std::mt19937_64 rng(5);
  Dataset data;
  data.groups = {"a", "b"};
  for (int n = 0; n < 4; ++n) {
    const auto g = data.groups[n % 2];
    data.curves.push_back(support::draw_curve(spec, support::bump_coeffs(spec.basis, 0.4, 2.0), vp,
                                              support::random_times(rng, 10), rng, "c" + std::to_string(n), g));
  }
  FitConfig cfg;
  cfg.max_outer = 1;
  cfg.variance_budget = 10;
  const auto fm = fit(spec, data, cfg);
  const auto j = model_to_json(fm, data, 120.0);
  const auto loaded = model_from_json(json::parse(j.dump()));
  EXPECT_EQ(loaded.model.spec.family.to_string(), fm.spec.family.to_string());
  EXPECT_EQ(loaded.model.groups, fm.groups);
  EXPECT_EQ(loaded.model.curve_ids, fm.curve_ids);
  for (std::size_t g = 0; g < fm.coefficients.size(); ++g)
    EXPECT_EQ(loaded.model.coefficients[g], fm.coefficients[g]);
  for (std::size_t n = 0; n < fm.latents.size(); ++n) {
    EXPECT_EQ(loaded.model.latents[n].u, fm.latents[n].u);
    EXPECT_EQ(loaded.model.latents[n].w, fm.latents[n].w);
  }
  EXPECT_EQ(loaded.model.variance.amplitude.scale, fm.variance.amplitude.scale);
  EXPECT_EQ(loaded.model.diagnostics.trace, fm.diagnostics.trace);
  EXPECT_EQ(loaded.data.curves[3].y, data.curves[3].y);
  EXPECT_EQ(model_to_json(loaded.model, loaded.data, loaded.horizon).dump(), j.dump());

  auto broken = j;
  broken["groups"] = {"a"};
  EXPECT_THROW(model_from_json(broken), InputError);
}
