#pragma once

// CSV ingest/emit and JSON persistence of fitted models.
//
// Count files use the header `curve_id,group,time_hours,count[,replicate]`
// (any column order). Times are divided by the horizon on the way in and
// multiplied back on the way out.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pavglm/dispersion.hpp"
#include "pavglm/estimation.hpp"
#include "pavglm/format.hpp"

namespace pavglm {

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size() || !std::isfinite(v))
    throw InputError("row " + std::to_string(row) + ": bad " + column + " value '" + s + "'");
  return v;
}

struct CsvRow {
  std::size_t line = 0;
  std::map<std::string, std::string> fields;
};

inline std::vector<CsvRow> read_csv(std::istream& in, const std::vector<std::string>& required,
                                    const std::vector<std::string>& optional) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) header = split_csv_line(line);
  }
  if (header.empty()) throw InputError("no rows");
  for (const auto& col : required)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw InputError("missing required column '" + col + "'");
  for (const auto& col : header)
    if (std::find(required.begin(), required.end(), col) == required.end() &&
        std::find(optional.begin(), optional.end(), col) == optional.end())
      throw InputError("unexpected column '" + col + "'");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw InputError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    CsvRow row{line_no, {}};
    for (std::size_t i = 0; i < header.size(); ++i) row.fields[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("no rows");
  return rows;
}

inline double parse_count(const CsvRow& row) {
  const double c = parse_double(row.fields.at("count"), row.line, "count");
  if (c < 0.0) throw InputError("row " + std::to_string(row.line) + ": negative count");
  if (c != std::floor(c)) throw InputError("row " + std::to_string(row.line) + ": count is not an integer");
  return c;
}

inline double parse_time(const CsvRow& row, double horizon) {
  const double t = parse_double(row.fields.at("time_hours"), row.line, "time_hours");
  if (t < 0.0) throw InputError("row " + std::to_string(row.line) + ": negative time");
  return t / horizon;
}

inline void check_group(const CsvRow& row, const std::vector<std::string>& known) {
  const auto& g = row.fields.at("group");
  if (g.empty()) throw InputError("row " + std::to_string(row.line) + ": empty group");
  if (!known.empty() && std::find(known.begin(), known.end(), g) == known.end())
    throw InputError("row " + std::to_string(row.line) + ": unknown group '" + g + "'");
  if (row.fields.at("curve_id").empty()) throw InputError("row " + std::to_string(row.line) + ": empty curve_id");
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// Raw replicate counts. `groups` (optional) lists the allowed group labels.
inline ReplicateTable read_replicates(std::istream& in, double horizon = 120.0,
                                      const std::vector<std::string>& groups = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  const auto rows = detail::read_csv(in, {"curve_id", "group", "time_hours", "count", "replicate"}, {});
  ReplicateTable table;
  std::map<std::pair<std::string, std::string>, std::size_t> cell;  // (curve, time text) -> row
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::map<std::string, std::string> curve_group;
  for (const auto& row : rows) {
    detail::check_group(row, groups);
    const auto& id = row.fields.at("curve_id");
    const auto& group = row.fields.at("group");
    const double t = detail::parse_time(row, horizon);
    const double count = detail::parse_count(row);
    const double rep = detail::parse_double(row.fields.at("replicate"), row.line, "replicate");
    const std::string time_key = shortest(t);
    if (!seen.insert({id, time_key, shortest(rep)}).second)
      throw InputError("row " + std::to_string(row.line) + ": duplicate (curve, time, replicate) key");
    auto [g, fresh] = curve_group.try_emplace(id, group);
    if (!fresh && g->second != group)
      throw InputError("row " + std::to_string(row.line) + ": curve '" + id + "' appears in two groups");
    auto [it, new_cell] = cell.try_emplace({id, time_key}, table.rows.size());
    if (new_cell) table.rows.push_back({id, group, t, {}});
    table.rows[it->second].counts.push_back(count);
  }
  return table;
}

inline ReplicateTable read_replicates_file(const std::string& path, double horizon = 120.0,
                                           const std::vector<std::string>& groups = {}) {
  auto in = detail::open_input(path);
  return read_replicates(in, horizon, groups);
}

// Already aggregated counts; the optional `replicates` column sets the
// number of summed replicates per curve.
inline Dataset read_aggregated(std::istream& in, double horizon = 120.0, const std::vector<std::string>& groups = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  const auto rows = detail::read_csv(in, {"curve_id", "group", "time_hours", "count"}, {"replicates"});
  ReplicateTable table;
  std::map<std::string, int> reps;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : rows) {
    detail::check_group(row, groups);
    const auto& id = row.fields.at("curve_id");
    const double t = detail::parse_time(row, horizon);
    if (!seen.insert({id, shortest(t)}).second)
      throw InputError("row " + std::to_string(row.line) + ": duplicate (curve, time) key");
    int k = 1;
    if (auto f = row.fields.find("replicates"); f != row.fields.end()) {
      const double v = detail::parse_double(f->second, row.line, "replicates");
      if (v < 1.0 || v != std::floor(v)) throw InputError("row " + std::to_string(row.line) + ": bad replicates");
      k = static_cast<int>(v);
    }
    auto [r, fresh] = reps.try_emplace(id, k);
    if (!fresh && r->second != k)
      throw InputError("row " + std::to_string(row.line) + ": curve '" + id + "' mixes replicate counts");
    table.rows.push_back({id, row.fields.at("group"), t, {detail::parse_count(row)}});
  }
  Dataset data;
  try {
    data = aggregate(table, 1.0).dataset;
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  for (auto& c : data.curves) c.replicate_count = reps.at(c.id);
  return data;
}

inline Dataset read_aggregated_file(const std::string& path, double horizon = 120.0,
                                    const std::vector<std::string>& groups = {}) {
  auto in = detail::open_input(path);
  return read_aggregated(in, horizon, groups);
}

inline void write_replicates(std::ostream& out, const ReplicateTable& table, double horizon = 120.0) {
  out << "curve_id,group,time_hours,count,replicate\n";
  for (const auto& r : table.rows)
    for (std::size_t k = 0; k < r.counts.size(); ++k)
      out << r.curve_id << ',' << r.group << ',' << format_number(r.time * horizon) << ','
          << format_number(r.counts[k]) << ',' << k + 1 << '\n';
}

inline void write_aggregated(std::ostream& out, const Dataset& data, double horizon = 120.0) {
  out << "curve_id,group,time_hours,count,replicates\n";
  for (const auto& c : data.curves)
    for (int k = 0; k < c.size(); ++k)
      out << c.id << ',' << c.group << ',' << format_number(c.times[k] * horizon) << ',' << format_number(c.y[k])
          << ',' << c.replicate_count << '\n';
}

// Generic CSV writer for result tables.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
  }
};

using json = nlohmann::json;

namespace detail {

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline json dataset_to_json(const Dataset& data) {
  json j;
  j["groups"] = data.groups;
  j["curves"] = json::array();
  for (const auto& c : data.curves)
    j["curves"].push_back(
        {{"id", c.id}, {"group", c.group}, {"times", c.times}, {"y", c.y}, {"replicate_count", c.replicate_count}});
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  Dataset d;
  d.groups = j.at("groups").get<std::vector<std::string>>();
  for (const auto& c : j.at("curves")) {
    Curve curve;
    curve.id = c.at("id").get<std::string>();
    curve.group = c.at("group").get<std::string>();
    curve.times = c.at("times").get<std::vector<double>>();
    curve.y = c.at("y").get<std::vector<double>>();
    curve.replicate_count = c.at("replicate_count").get<int>();
    d.curves.push_back(std::move(curve));
  }
  d.validate();
  return d;
}

inline json variance_to_json(const VarianceParams& vp) {
  return {{"range_amp", vp.amplitude.range},   {"smoothness_amp", vp.amplitude.smoothness},
          {"scale_amp", vp.amplitude.scale},   {"range_warp", vp.warp_range},
          {"scale_warp", vp.warp_scale}};
}

inline VarianceParams variance_from_json(const json& j) {
  VarianceParams vp;
  vp.amplitude = {j.at("scale_amp").get<double>(), j.at("smoothness_amp").get<double>(),
                  j.at("range_amp").get<double>()};
  vp.warp_range = j.at("range_warp").get<double>();
  vp.warp_scale = j.at("scale_warp").get<double>();
  vp.validate();
  return vp;
}

// The model file embeds the dataset it was fitted to so later stages
// (information matrices, leave-one-out) need no second input.
inline json model_to_json(const FittedModel& fm, const Dataset& data, double horizon) {
  json j;
  j["family"] = fm.spec.family.to_string();
  j["n_basis"] = fm.spec.basis.size();
  j["warp_anchors"] = fm.spec.warp.anchors;
  j["horizon_hours"] = horizon;
  j["laplace_convention"] = to_string(fm.convention);
  j["groups"] = fm.groups;
  j["coefficients"] = json::array();
  for (const auto& c : fm.coefficients) j["coefficients"].push_back(detail::to_json(c));
  j["variance"] = variance_to_json(fm.variance);
  j["latents"] = json::array();
  for (std::size_t n = 0; n < fm.latents.size(); ++n)
    j["latents"].push_back(
        {{"curve_id", fm.curve_ids.at(n)}, {"u", detail::to_json(fm.latents[n].u)}, {"w", detail::to_json(fm.latents[n].w)}});
  const auto& d = fm.diagnostics;
  j["diagnostics"] = {{"converged", d.converged},
                      {"outer_iterations", d.outer_iterations},
                      {"objective", d.objective},
                      {"posterior", d.posterior},
                      {"max_kkt", d.max_kkt},
                      {"max_warp_gradient", d.max_warp_gradient},
                      {"variance_evaluations", d.variance_evaluations},
                      {"trace", d.trace},
                      {"message", d.message}};
  j["dataset"] = dataset_to_json(data);
  return j;
}

struct LoadedModel {
  FittedModel model;
  Dataset data;
  double horizon = 120.0;
};

inline LoadedModel model_from_json(const json& j) {
  LoadedModel out;
  auto& fm = out.model;
  fm.spec.family = ResponseFamily::parse(j.at("family").get<std::string>());
  fm.spec.basis = SplineBasis(j.at("n_basis").get<int>());
  fm.spec.warp.anchors = j.at("warp_anchors").get<std::vector<double>>();
  fm.spec.warp.validate();
  out.horizon = j.at("horizon_hours").get<double>();
  fm.convention = parse_laplace_convention(j.at("laplace_convention").get<std::string>());
  fm.groups = j.at("groups").get<std::vector<std::string>>();
  for (const auto& c : j.at("coefficients")) fm.coefficients.push_back(detail::vector_from_json(c));
  fm.variance = variance_from_json(j.at("variance"));
  for (const auto& l : j.at("latents")) {
    fm.curve_ids.push_back(l.at("curve_id").get<std::string>());
    fm.latents.push_back({detail::vector_from_json(l.at("u")), detail::vector_from_json(l.at("w"))});
  }
  const auto& d = j.at("diagnostics");
  fm.diagnostics.converged = d.at("converged").get<bool>();
  fm.diagnostics.outer_iterations = d.at("outer_iterations").get<int>();
  fm.diagnostics.objective = d.at("objective").get<double>();
  fm.diagnostics.posterior = d.at("posterior").get<double>();
  fm.diagnostics.max_kkt = d.at("max_kkt").get<double>();
  fm.diagnostics.max_warp_gradient = d.at("max_warp_gradient").get<double>();
  fm.diagnostics.variance_evaluations = d.at("variance_evaluations").get<int>();
  fm.diagnostics.trace = d.at("trace").get<std::vector<double>>();
  fm.diagnostics.message = d.at("message").get<std::string>();
  out.data = dataset_from_json(j.at("dataset"));
  if (fm.groups != out.data.groups || fm.latents.size() != out.data.curves.size())
    throw InputError("model file: dataset does not match the fitted model");
  return out;
}

}  // namespace pavglm
