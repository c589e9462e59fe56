#pragma once

// End-to-end stages behind the command line tool. Each stage reads its
// inputs from paths in RunConfig and writes CSV/JSON artifacts into
// RunConfig::out_dir; the returned structs carry the same numbers for
// programmatic use.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pavglm/dispersion.hpp"
#include "pavglm/estimation.hpp"
#include "pavglm/format.hpp"
#include "pavglm/inference.hpp"
#include "pavglm/io.hpp"
#include "pavglm/robustness.hpp"
#include "pavglm/synth.hpp"

namespace pavglm {

struct RunConfig {
  std::string input;                     // count CSV
  std::string input_mode = "replicates";  // or "aggregated"
  std::string model;                     // model JSON (default out_dir/model.json)
  std::string out_dir = "out";
  std::string family = "negbin(r=4.658)";  // per replicate
  std::vector<std::string> groups;         // allowed labels, coldest first
  int n_basis = 11;
  int m_w = 7;
  double horizon = 120.0;
  std::vector<double> thresholds = default_thresholds();
  int n_sim = 1000;
  int n_traj = 1000;
  double level = 0.95;
  bool include_amplitude = true;
  bool paired_q = true;
  std::uint64_t seed = 7;
  LaplaceConvention laplace_convention = LaplaceConvention::paper;
  int max_outer = 20;
  int variance_budget = 200;
  bool like_paper = true;
  bool truncate = false;

  ModelSpec model_spec() const {
    ModelSpec spec;
    spec.family = ResponseFamily::parse(family);
    spec.basis = SplineBasis(n_basis);
    spec.warp = WarpSpec::equidistant(m_w);
    return spec;
  }

  FitConfig fit_config() const {
    FitConfig cfg;
    cfg.max_outer = max_outer;
    cfg.variance_budget = variance_budget;
    cfg.seed = seed;
    cfg.laplace_convention = laplace_convention;
    return cfg;
  }

  std::string out_path(const std::string& name) const { return (std::filesystem::path(out_dir) / name).string(); }
  std::string model_path() const { return model.empty() ? out_path("model.json") : model; }

  void validate() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
    if (input_mode != "replicates" && input_mode != "aggregated")
      throw std::invalid_argument("input_mode must be 'replicates' or 'aggregated'");
    if (n_sim < 1 || n_traj < 1) throw std::invalid_argument("n_sim and n_traj must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
    model_spec();
  }
};

// "a:step:b" or a comma list.
inline std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  if (std::count(s.begin(), s.end(), ':') == 2) {
    const auto a = s.find(':'), b = s.find(':', a + 1);
    const double lo = std::stod(s.substr(0, a)), step = std::stod(s.substr(a + 1, b - a - 1)),
                 hi = std::stod(s.substr(b + 1));
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("bad threshold range '" + s + "'");
    for (int i = 0; lo + i * step <= hi + 1e-9 * step; ++i) out.push_back(lo + i * step);
    return out;
  }
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw std::invalid_argument("no thresholds in '" + s + "'");
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!detail::trim(item).empty()) out.push_back(detail::trim(item));
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "' expects a boolean, got '" + v + "'");
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "input") cfg.input = value;
  else if (key == "input_mode") cfg.input_mode = value;
  else if (key == "model") cfg.model = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "family") cfg.family = value;
  else if (key == "groups") cfg.groups = split_list(value);
  else if (key == "n_basis") cfg.n_basis = std::stoi(value);
  else if (key == "m_w") cfg.m_w = std::stoi(value);
  else if (key == "horizon") cfg.horizon = std::stod(value);
  else if (key == "thresholds") cfg.thresholds = parse_thresholds(value);
  else if (key == "n_sim") cfg.n_sim = std::stoi(value);
  else if (key == "n_traj") cfg.n_traj = std::stoi(value);
  else if (key == "level") cfg.level = std::stod(value);
  else if (key == "include_amplitude") cfg.include_amplitude = parse_bool(key, value);
  else if (key == "paired_q") cfg.paired_q = parse_bool(key, value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "laplace_convention") cfg.laplace_convention = parse_laplace_convention(value);
  else if (key == "max_outer") cfg.max_outer = std::stoi(value);
  else if (key == "variance_budget") cfg.variance_budget = std::stoi(value);
  else if (key == "truncate") cfg.truncate = parse_bool(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

// Flat `key = value` lines; '#' starts a comment.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

namespace detail {

inline void ensure_out_dir(const RunConfig& cfg) { std::filesystem::create_directories(cfg.out_dir); }

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

inline void write_csv(const std::string& path, const CsvTable& table) {
  auto out = open_output(path);
  table.write(out);
}

inline void write_json(const std::string& path, const json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

inline std::string num(double v) { return shortest(v); }
inline std::string hours(double v) { return format_number(v); }

}  // namespace detail

// ---- synth ----------------------------------------------------------------

struct SynthRun {
  SynthOutput output;
  std::string csv_path;
};

inline SynthRun run_synth(const RunConfig& cfg) {
  if (!cfg.like_paper) throw std::invalid_argument("synth: only the like-paper design is available");
  detail::ensure_out_dir(cfg);
  SynthConfig sc = like_paper(cfg.seed, cfg.truncate);
  sc.spec.basis = SplineBasis(cfg.n_basis);
  sc.spec.warp = WarpSpec::equidistant(cfg.m_w);
  sc.horizon = cfg.horizon;
  SynthRun run{synthesize(sc), cfg.out_path("synth_counts.csv")};
  {
    auto out = detail::open_output(run.csv_path);
    write_replicates(out, run.output.table, cfg.horizon);
  }
  json truth;
  truth["seed"] = cfg.seed;
  truth["r0"] = sc.r0;
  truth["replicates"] = sc.replicates;
  truth["variance"] = variance_to_json(sc.variance);
  for (const auto& g : sc.groups) {
    truth["groups"].push_back(g.name);
    truth["coefficients"][g.name] = detail::to_json(g.coeffs);
    const auto ps = peak_stats(g.coeffs, sc.spec.basis, cfg.horizon);
    truth["peaks"][g.name] = {{"location_hours", ps.location_hours}, {"decrease", ps.decrease}};
  }
  for (const auto& c : run.output.curves)
    truth["curves"].push_back({{"id", c.id}, {"group", c.group}, {"w", detail::to_json(c.w)}, {"u", detail::to_json(c.u)}});
  detail::write_json(cfg.out_path("synth_truth.json"), truth);
  return run;
}

// ---- dispersion -----------------------------------------------------------

struct DispersionRun {
  MeanVarianceTable mean_variance;
  double r0 = 0.0;  // +inf: use Poisson
  AggregatedData aggregated;
};

inline DispersionRun run_dispersion(const RunConfig& cfg) {
  detail::ensure_out_dir(cfg);
  const auto table = read_replicates_file(cfg.input, cfg.horizon, cfg.groups);
  DispersionRun run;
  run.mean_variance = mean_variance_table(table);
  run.r0 = estimate_common_rate(table);
  run.aggregated = aggregate(table, run.r0);

  CsvTable mv{{"curve_id", "time_hours", "mean", "variance"}, {}};
  for (const auto& r : run.mean_variance.rows)
    mv.rows.push_back({r.curve_id, detail::hours(r.time * cfg.horizon), detail::num(r.mean), detail::num(r.variance)});
  detail::write_csv(cfg.out_path("mean_variance.csv"), mv);
  {
    auto out = detail::open_output(cfg.out_path("aggregated_counts.csv"));
    write_aggregated(out, run.aggregated.dataset, cfg.horizon);
  }
  json j;
  j["poisson"] = std::isinf(run.r0);
  j["r0"] = std::isinf(run.r0) ? json(nullptr) : json(run.r0);
  j["replicates"] = run.aggregated.replicates;
  j["aggregated_family"] = run.aggregated.family.to_string();
  j["per_replicate_family"] = std::isinf(run.r0) ? std::string("poisson") : ResponseFamily::negative_binomial(run.r0).to_string();
  j["rows"] = run.mean_variance.rows.size();
  j["warnings"] = run.mean_variance.warnings;
  detail::write_json(cfg.out_path("dispersion.json"), j);
  return run;
}

// ---- fit ------------------------------------------------------------------

inline Dataset load_counts(const RunConfig& cfg, const ReplicateTable* table = nullptr) {
  if (cfg.input_mode == "aggregated") return read_aggregated_file(cfg.input, cfg.horizon, cfg.groups);
  const ReplicateTable raw = table != nullptr ? *table : read_replicates_file(cfg.input, cfg.horizon, cfg.groups);
  return aggregate(raw, 1.0).dataset;
}

// Keeps the configured group order (coldest first) when one is given.
inline void order_groups(Dataset& data, const std::vector<std::string>& groups) {
  if (groups.empty()) return;
  for (const auto& g : data.groups)
    if (std::find(groups.begin(), groups.end(), g) == groups.end())
      throw InputError("group '" + g + "' is not listed in the configured groups");
  std::vector<std::string> ordered;
  for (const auto& g : groups)
    if (std::find(data.groups.begin(), data.groups.end(), g) != data.groups.end()) ordered.push_back(g);
  data.groups = ordered;
}

inline void write_fit_outputs(const RunConfig& cfg, const FittedModel& fm, const Dataset& data) {
  const auto grid = uniform_grid(121);
  CsvTable curves{{"group", "time_hours", "theta", "intensity"}, {}};
  for (std::size_t j = 0; j < fm.groups.size(); ++j)
    for (double t : grid) {
      const double th = fm.spec.basis.design_row(t).dot(fm.coefficients[j]);
      curves.rows.push_back({fm.groups[j], detail::hours(t * cfg.horizon), detail::num(th), detail::num(std::exp(th))});
    }
  detail::write_csv(cfg.out_path("fitted_curves.csv"), curves);

  CsvTable latent{{"curve_id", "group", "time_hours", "count", "u", "intensity"}, {}};
  CsvTable warps{{"curve_id", "group", "time_hours", "warped_hours"}, {}};
  for (std::size_t n = 0; n < data.curves.size(); ++n) {
    const auto& c = data.curves[n];
    for (int k = 0; k < c.size(); ++k)
      latent.rows.push_back({c.id, c.group, detail::hours(c.times[k] * cfg.horizon), detail::num(c.y[k]),
                             detail::num(fm.latents[n].u(k)), detail::num(std::exp(fm.latents[n].u(k)))});
    const Warp warp(fm.spec.warp, detail::as_span(fm.latents[n].w));
    for (double t : grid)
      warps.rows.push_back({c.id, c.group, detail::hours(t * cfg.horizon), detail::num(warp(t) * cfg.horizon)});
  }
  detail::write_csv(cfg.out_path("predicted_latents.csv"), latent);
  detail::write_csv(cfg.out_path("warps.csv"), warps);

  CsvTable trace{{"iteration", "objective"}, {}};
  for (std::size_t i = 0; i < fm.diagnostics.trace.size(); ++i)
    trace.rows.push_back({std::to_string(i), detail::num(fm.diagnostics.trace[i])});
  detail::write_csv(cfg.out_path("fit_trace.csv"), trace);
}

inline FittedModel run_fit(const RunConfig& cfg, Dataset* data_out = nullptr) {
  cfg.validate();
  detail::ensure_out_dir(cfg);
  Dataset data = load_counts(cfg);
  order_groups(data, cfg.groups);
  const FittedModel fm = fit(cfg.model_spec(), data, cfg.fit_config());
  detail::write_json(cfg.model_path(), model_to_json(fm, data, cfg.horizon));
  write_fit_outputs(cfg, fm, data);
  if (data_out != nullptr) *data_out = data;
  return fm;
}

inline LoadedModel load_model(const RunConfig& cfg) {
  const auto path = cfg.model_path();
  if (!std::filesystem::exists(path)) throw InputError("no fitted model found at '" + path + "'");
  std::ifstream in(path);
  return model_from_json(json::parse(in));
}

// ---- infer ----------------------------------------------------------------

struct InferRun {
  std::vector<Eigen::MatrixXd> information;
  std::vector<GroupPeakSamples> peaks;
  std::vector<QRow> q;
};

inline InferRun run_infer(const RunConfig& cfg) {
  detail::ensure_out_dir(cfg);
  const auto loaded = load_model(cfg);
  const auto& fm = loaded.model;
  const double horizon = loaded.horizon;
  InferRun run;
  CsvTable band{{"group", "time_hours", "estimate", "se", "lower", "upper"}, {}};
  CsvTable info_csv{{"group", "row", "col", "value"}, {}};
  const auto grid = uniform_grid(121);
  for (int j = 0; j < static_cast<int>(fm.groups.size()); ++j) {
    run.information.push_back(information_matrix(fm, loaded.data, j));
    const auto& info = run.information.back();
    for (Eigen::Index r = 0; r < info.rows(); ++r)
      for (Eigen::Index c = 0; c < info.cols(); ++c)
        info_csv.rows.push_back({fm.groups[j], std::to_string(r), std::to_string(c), detail::num(info(r, c))});
    for (const auto& b : confidence_band(fm.coefficients[j], info, fm.spec.basis, cfg.level, grid))
      band.rows.push_back({fm.groups[j], detail::hours(b.time * horizon), detail::num(b.estimate), detail::num(b.se),
                           detail::num(b.lower), detail::num(b.upper)});
    const auto draws = sample_coefficients(fm.coefficients[j], info, cfg.n_sim, cfg.seed, static_cast<std::uint64_t>(j));
    run.peaks.push_back(peak_samples(fm.groups[j], fm.coefficients[j], draws, fm.spec.basis, horizon));
  }
  detail::write_csv(cfg.out_path("confidence.csv"), band);
  detail::write_csv(cfg.out_path("information.csv"), info_csv);

  const double lo = 0.5 - 0.5 * cfg.level, hi = 0.5 + 0.5 * cfg.level;
  const std::string lo_name = format_number(100.0 * lo) + "%", hi_name = format_number(100.0 * hi) + "%";
  CsvTable peaks{{"group", "statistic", lo_name, "estimate", hi_name, "peak_at_horizon"}, {}};
  for (const auto& p : run.peaks) {
    peaks.rows.push_back({p.group, "peak_location_hours", detail::hours(quantile(p.location, lo)),
                          detail::hours(p.estimate.location_hours), detail::hours(quantile(p.location, hi)),
                          p.estimate.peak_at_horizon ? "true" : "false"});
    peaks.rows.push_back({p.group, "peak_decrease_percent_per_hour", detail::num(quantile(p.decrease, lo)),
                          detail::num(p.estimate.decrease), detail::num(quantile(p.decrease, hi)),
                          p.estimate.peak_at_horizon ? "true" : "false"});
  }
  detail::write_csv(cfg.out_path("peaks.csv"), peaks);

  run.q = q_table(run.peaks, cfg.paired_q);
  CsvTable q{{"hypothesis", "functional", "x", "y", "q"}, {}};
  for (const auto& r : run.q) q.rows.push_back({r.hypothesis, r.functional, r.x, r.y, detail::num(r.q)});
  detail::write_csv(cfg.out_path("q_table.csv"), q);
  return run;
}

// ---- simulate -------------------------------------------------------------

struct SimulateRun {
  std::vector<TrajectorySet> trajectories;  // per group
  std::vector<std::vector<double>> peak_hours;
};

inline SimulateRun run_simulate(const RunConfig& cfg) {
  detail::ensure_out_dir(cfg);
  const auto loaded = load_model(cfg);
  const auto& fm = loaded.model;
  const double horizon = loaded.horizon;
  SimulateRun run;
  CsvTable thr{{"group", "trajectory", "threshold", "first_hours", "duration_hours"}, {}};
  CsvTable peaks{{"group", "trajectory", "peak_hours"}, {}};
  TrajectoryOptions opt;
  opt.n_traj = cfg.n_traj;
  opt.include_amplitude = cfg.include_amplitude;
  for (std::size_t j = 0; j < fm.groups.size(); ++j) {
    run.trajectories.push_back(simulate_trajectories(fm.spec, fm.coefficients[j], fm.variance, opt, cfg.seed, j));
    const auto& tr = run.trajectories.back();
    run.peak_hours.push_back(trajectory_peak_hours(tr, horizon));
    for (Eigen::Index s = 0; s < tr.link.rows(); ++s) {
      const Eigen::VectorXd r = tr.link.row(s).transpose();
      const std::vector<double> row(r.data(), r.data() + r.size());
      for (const auto& res : threshold_summary(tr.grid, row, cfg.thresholds, horizon))
        thr.rows.push_back({fm.groups[j], std::to_string(s + 1), detail::num(res.threshold),
                            res.first_hours ? detail::hours(*res.first_hours) : std::string("none"),
                            detail::hours(res.duration_hours)});
      peaks.rows.push_back({fm.groups[j], std::to_string(s + 1), detail::hours(run.peak_hours[j][s])});
    }
  }
  detail::write_csv(cfg.out_path("thresholds.csv"), thr);
  detail::write_csv(cfg.out_path("trajectory_peaks.csv"), peaks);
  return run;
}

// ---- loo ------------------------------------------------------------------

inline LooResult run_loo(const RunConfig& cfg, const std::string& replicates_path = {}) {
  detail::ensure_out_dir(cfg);
  const auto loaded = load_model(cfg);
  std::optional<ReplicateTable> raw;
  if (!replicates_path.empty()) raw = read_replicates_file(replicates_path, loaded.horizon, cfg.groups);
  FitConfig fc = cfg.fit_config();
  fc.laplace_convention = loaded.model.convention;
  const auto res = leave_one_out(loaded.data, loaded.model, fc, raw ? &*raw : nullptr);

  CsvTable rows{{"parameter", "lower", "estimate", "upper", "refits"}, {}};
  for (const auto& r : res.rows)
    rows.rows.push_back({r.parameter, detail::num(r.lower), detail::num(r.estimate), detail::num(r.upper),
                         std::to_string(r.refits)});
  detail::write_csv(cfg.out_path("loo.csv"), rows);

  CsvTable refits{{"left_out", "converged", "nb_dispersion", "range_amp", "smoothness_amp", "scale_amp", "range_warp",
                   "scale_warp", "message"},
                  {}};
  for (const auto& r : res.refits) {
    std::vector<std::string> row{r.left_out, r.converged ? "true" : "false", detail::num(r.rate)};
    for (double v : variance_row_values(r.variance)) row.push_back(detail::num(v));
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    row.push_back(msg);
    refits.rows.push_back(row);
  }
  detail::write_csv(cfg.out_path("loo_refits.csv"), refits);

  CsvTable env{{"group", "time_hours", "full", "lower", "upper"}, {}};
  for (const auto& e : res.envelopes)
    for (std::size_t i = 0; i < e.grid.size(); ++i)
      env.rows.push_back({e.group, detail::hours(e.grid[i] * loaded.horizon), detail::num(e.full[i]),
                          detail::num(e.lower[i]), detail::num(e.upper[i])});
  detail::write_csv(cfg.out_path("loo_envelope.csv"), env);
  return res;
}

// ---- report ---------------------------------------------------------------

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& manifest_layout() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> layout{
      {"mean_variance", {"mean_variance.csv", "dispersion.json"}},
      {"fitted_curves", {"fitted_curves.csv", "predicted_latents.csv"}},
      {"warps", {"warps.csv"}},
      {"thresholds", {"thresholds.csv", "trajectory_peaks.csv"}},
      {"confidence", {"confidence.csv", "information.csv"}},
      {"peaks", {"peaks.csv"}},
      {"q_table", {"q_table.csv"}},
      {"loo", {"loo.csv", "loo_refits.csv", "loo_envelope.csv"}},
  };
  return layout;
}

// Collects every artifact present in out_dir into manifest.json; missing
// stages are listed with null entries.
inline json run_report(const RunConfig& cfg) {
  const auto loaded = load_model(cfg);
  json manifest;
  manifest["model"] = std::filesystem::path(cfg.model_path()).filename().string();
  manifest["family"] = loaded.model.spec.family.to_string();
  manifest["laplace_convention"] = to_string(loaded.model.convention);
  manifest["converged"] = loaded.model.diagnostics.converged;
  manifest["variance"] = variance_to_json(loaded.model.variance);
  manifest["artifacts"] = json::object();
  for (const auto& [key, files] : manifest_layout()) {
    json entry = json::array();
    for (const auto& f : files)
      if (std::filesystem::exists(cfg.out_path(f))) entry.push_back(f);
    manifest["artifacts"][key] = entry.empty() ? json(nullptr) : entry;
  }
  detail::write_json(cfg.out_path("manifest.json"), manifest);
  return manifest;
}

}  // namespace pavglm
