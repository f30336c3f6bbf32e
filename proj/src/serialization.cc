#include "parapack/serialization.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "parapack/errors.h"

namespace parapack {

using nlohmann::json;

namespace {

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(num(m(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v(i)));
  return out;
}

template <typename Range>
json list_json(const Range& r) {
  json out = json::array();
  for (double x : r) out.push_back(num(x));
  return out;
}

// Strict object reader: records which keys were consumed so leftovers can
// be reported as unknown fields.
class Fields {
 public:
  Fields(const json& obj, std::string path, const std::string& source)
      : obj_(obj), path_(std::move(path)), source_(source) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigError(source_ + ": " + field + ": " + msg);
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) fail(at(key), "missing required field");
    return *it;
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(at(key), "expected a finite number");
    return x;
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }
  double positive(const std::string& key) {
    const double x = number(key);
    if (!(x > 0.0)) fail(at(key), "must be positive");
    return x;
  }
  double positive(const std::string& key, double fallback) {
    return has(key) ? positive(key) : fallback;
  }

  std::uint64_t count(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    return has(key) ? count(key) : fallback;
  }

  std::string string(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

class OcvCache {
 public:
  OcvCache(std::filesystem::path base, std::string source)
      : base_(std::move(base)), source_(std::move(source)) {}

  OcvCurvePtr get(const std::string& rel, const std::string& field) {
    std::filesystem::path p(rel);
    if (p.is_relative()) p = base_ / p;
    p = p.lexically_normal();
    auto it = cache_.find(p.string());
    if (it != cache_.end()) return it->second;
    if (!std::filesystem::exists(p)) {
      throw ConfigError(source_ + ": " + field + ": OCV file not found: " + p.string());
    }
    auto curve = std::make_shared<const OcvCurve>(read_ocv_csv(p));
    cache_.emplace(p.string(), curve);
    return curve;
  }

 private:
  std::filesystem::path base_;
  std::string source_;
  std::map<std::string, OcvCurvePtr> cache_;
};

Chemistry chemistry_field(Fields& f, const std::string& key) {
  const std::string name = f.string(key);
  try {
    return chemistry_from_string(name);
  } catch (const std::exception&) {
    f.fail(f.at(key), "unknown chemistry '" + name + "' (expected NMC or LFP)");
  }
}

}  // namespace

void to_json(json& j, const CellParams& cell) {
  json pairs = json::array();
  for (const auto& rc : cell.rc_pairs) pairs.push_back({{"r_ohms", rc.r}, {"c_farads", rc.c}});
  j = {{"q_coulombs", num(cell.q)},
       {"r_s_ohms", num(cell.r_s)},
       {"rc_pairs", std::move(pairs)},
       {"ocv", cell.ocv ? json(cell.ocv->name()) : json(nullptr)}};
}

void to_json(json& j, const StateSpace& ss) {
  j = {{"states", ss.state_labels},
       {"a", matrix_json(ss.a)},
       {"b", vector_json(ss.b)},
       {"c", vector_json(ss.c.transpose())},
       {"d", num(ss.d)},
       {"drift", vector_json(ss.drift)},
       {"output_bias", num(ss.output_bias)}};
}

void to_json(json& j, const ObservabilityReport& r) {
  json pairs = json::array();
  for (const auto& [a, b] : r.offending_pairs) pairs.push_back({a, b});
  j = {{"n_states", r.n_states},
       {"rank", r.rank},
       {"observable", r.observable},
       {"numerically_full_rank", r.numerically_full_rank},
       {"symbolic_observable", r.symbolic_observable},
       {"verdicts_agree", r.verdicts_agree},
       {"conditions",
        {{"nonzero_gamma", r.condition_nonzero_gamma},
         {"finite_rs", r.condition_finite_rs},
         {"distinct_eigenvalues", r.condition_distinct}}},
       {"eigenvalues", list_json(r.eigenvalues)},
       {"singular_values", list_json(r.singular_values)},
       {"min_pairwise_gap", num(r.min_pairwise_gap)},
       {"offending_pairs", std::move(pairs)}};
}

void to_json(json& j, const ClusterAssignment& a) {
  j = {{"n_clusters", a.n_clusters()},
       {"labels", a.labels},
       {"centers", list_json(a.centers)},
       {"members", a.members()}};
}

void to_json(json& j, const ClusteredPack& c) {
  j = json::array();
  for (const auto& cl : c.clusters) {
    j.push_back({{"members", cl.members}, {"aggregate", cl.aggregate}});
  }
}

void to_json(json& j, const FilterDesign& d) {
  json eig = json::array();
  for (const auto& z : d.closed_loop_eigenvalues()) eig.push_back({num(z.real()), num(z.imag())});
  j = {{"model", d.ss},
       {"gain_l", vector_json(d.gain_l)},
       {"covariance_p", matrix_json(d.covariance_p)},
       {"noise",
        {{"process_noise_std", d.noise.process_noise_std},
         {"measurement_noise_std", d.noise.measurement_noise_std}}},
       {"care_residual", num(d.residual)},
       {"closed_loop_eigenvalues", std::move(eig)}};
}

void to_json(json& j, const FleetSpec& s) {
  j = {{"chemistry", to_string(s.chemistry)},
       {"n_healthy", s.n_healthy},
       {"n_power_fade", s.n_power_fade},
       {"n_capacity_fade", s.n_capacity_fade},
       {"jitter", s.jitter},
       {"rs_fade_factor", s.rs_fade_factor},
       {"q_fade_factor", s.q_fade_factor},
       {"plant_order", s.plant_order},
       {"seed", s.seed}};
  if (s.ocv) j["ocv"] = s.ocv->name();
}

void to_json(json& j, const StudyConfig& c) {
  j = {{"fleet", c.fleet},
       {"n_runs", c.n_runs},
       {"profile",
        {{"amps", c.profile.amps}, {"charge_s", c.profile.charge_s}, {"rest_s", c.profile.rest_s}}},
       {"true_initial_soc", c.true_initial_soc},
       {"estimate_init", {{"lo", c.estimate_lo}, {"hi", c.estimate_hi}}},
       {"noise",
        {{"process_noise_std", c.noise.process_noise_std},
         {"measurement_noise_std", c.noise.measurement_noise_std}}},
       {"dt", c.dt},
       {"seed", c.seed},
       {"gap_threshold", c.gap_threshold},
       {"soc_window", {{"lo", c.soc_lo}, {"hi", c.soc_hi}}},
       {"obs_gap_tol", c.obs_gap_tol}};
}

json study_summary_json(const StudyConfig& config, const StudyResult& r) {
  json seeds = json::array();
  json inits = json::array();
  json finals = json::array();
  for (const auto& run : r.per_run) {
    seeds.push_back(run.seed);
    inits.push_back(num(run.initial_estimate));
    const std::size_t m = run.errors.n_clusters;
    const std::size_t last = (run.errors.n_rows() - 1) * m;
    finals.push_back(list_json(std::vector<double>(run.errors.values.begin() + last,
                                                   run.errors.values.begin() + last + m)));
  }
  auto time_or_null = [](double t) { return t < 0.0 ? json(nullptr) : json(t); };
  const auto& ns = r.noise_stats;
  return {
      {"config", config},
      {"n_samples", r.t.size()},
      {"duration_s", r.t.empty() ? json(nullptr) : num(r.t.back())},
      {"initial_rmse", num(r.initial_rmse)},
      {"final_rmse", num(r.final_rmse)},
      {"final_to_initial_ratio", num(r.final_rmse / r.initial_rmse)},
      {"halving_time_s", time_or_null(r.halving_time)},
      {"time_to_20pct_s", time_or_null(r.time_to_20pct)},
      {"noise_stats",
       {{"samples", ns.count},
        {"voltage_mean", num(ns.voltage_mean)},
        {"voltage_std", num(ns.voltage_std)},
        {"current_mean", num(ns.current_mean)},
        {"current_std", num(ns.current_std)}}},
      {"fleet", r.fleet.cells},
      {"assignment", r.assignment},
      {"clusters", r.clustered},
      {"observability", r.observability},
      {"filter", r.design},
      {"runs", {{"seeds", std::move(seeds)},
                {"initial_estimates", std::move(inits)},
                {"final_errors", std::move(finals)}}},
  };
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

FleetSpec parse_fleet_spec(const json& doc, const std::filesystem::path& base_dir,
                           const std::string& source, const std::string& field) {
  Fields f(doc, field, source);
  FleetSpec s;
  s.chemistry = chemistry_field(f, "chemistry");
  s.n_healthy = f.count("n_healthy", s.n_healthy);
  s.n_power_fade = f.count("n_power_fade", s.n_power_fade);
  s.n_capacity_fade = f.count("n_capacity_fade", s.n_capacity_fade);
  s.jitter = f.number("jitter", s.jitter);
  if (!(s.jitter >= 0.0 && s.jitter < 0.5)) f.fail(f.at("jitter"), "must be in [0, 0.5)");
  s.rs_fade_factor = f.positive("rs_fade_factor", s.rs_fade_factor);
  s.q_fade_factor = f.positive("q_fade_factor", s.q_fade_factor);
  const auto order = f.count("plant_order", 1);
  if (order != 1 && order != 3) f.fail(f.at("plant_order"), "must be 1 or 3");
  s.plant_order = static_cast<int>(order);
  s.seed = f.count("seed", 0);
  if (f.has("ocv_csv")) {
    OcvCache cache(base_dir, source);
    s.ocv = cache.get(f.string("ocv_csv"), f.at("ocv_csv"));
  }
  f.finish();
  if (s.size() == 0) f.fail(field, "fleet has no cells");
  return s;
}

PackModel parse_pack_config(const json& doc, const std::filesystem::path& base_dir,
                            const std::string& source) {
  Fields top(doc, "", source);
  const bool has_cells = top.has("cells");
  const bool has_fleet = top.has("fleet_spec");
  if (has_cells == has_fleet) {
    top.fail("(root)", "exactly one of 'cells' or 'fleet_spec' is required");
  }
  PackModel model;
  if (has_fleet) {
    model = generate_fleet(parse_fleet_spec(top.get("fleet_spec"), base_dir, source));
    top.finish();
    return model;
  }

  const json& cells = top.get("cells");
  top.finish();
  if (!cells.is_array() || cells.empty()) top.fail("cells", "expected a non-empty array");
  OcvCache cache(base_dir, source);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    Fields f(cells[k], "cells[" + std::to_string(k) + "]", source);
    CellParams cell;
    cell.q = f.positive("q_coulombs");
    cell.r_s = f.positive("r_s_ohms");
    if (f.has("rc_pairs")) {
      const json& pairs = f.get("rc_pairs");
      if (!pairs.is_array()) f.fail(f.at("rc_pairs"), "expected an array");
      for (std::size_t j = 0; j < pairs.size(); ++j) {
        Fields p(pairs[j], f.at("rc_pairs") + "[" + std::to_string(j) + "]", source);
        RcPair rc{p.positive("r_ohms"), p.positive("c_farads")};
        p.finish();
        cell.rc_pairs.push_back(rc);
      }
    }
    const bool csv = f.has("ocv_csv");
    const bool chem = f.has("chemistry");
    if (csv == chem) f.fail(f.at("ocv_csv"), "exactly one of 'ocv_csv' or 'chemistry' is required");
    cell.ocv = csv ? cache.get(f.string("ocv_csv"), f.at("ocv_csv"))
                   : builtin_ocv(chemistry_field(f, "chemistry"));
    f.finish();
    model.cells.push_back(std::move(cell));
  }
  return model;
}

PackModel load_pack_config(const std::filesystem::path& path) {
  return parse_pack_config(read_json_file(path), path.parent_path(), path.string());
}

StudyConfig parse_study_config(const json& doc, const std::filesystem::path& base_dir,
                               const std::string& source) {
  Fields f(doc, "", source);
  StudyConfig c;
  c.fleet = parse_fleet_spec(f.get("fleet"), base_dir, source, "fleet");
  c.n_runs = f.count("n_runs", c.n_runs);
  if (c.n_runs < 1) f.fail("n_runs", "must be at least 1");
  if (f.has("profile")) {
    Fields p(f.get("profile"), "profile", source);
    c.profile.amps = p.number("amps", c.profile.amps);
    c.profile.charge_s = p.positive("charge_s", c.profile.charge_s);
    c.profile.rest_s = p.positive("rest_s", c.profile.rest_s);
    p.finish();
  }
  c.true_initial_soc = f.number("true_initial_soc", c.true_initial_soc);
  if (!(c.true_initial_soc >= 0.0 && c.true_initial_soc <= 1.0)) {
    f.fail("true_initial_soc", "must be in [0, 1]");
  }
  if (f.has("estimate_init")) {
    Fields e(f.get("estimate_init"), "estimate_init", source);
    c.estimate_lo = e.number("lo", c.estimate_lo);
    c.estimate_hi = e.number("hi", c.estimate_hi);
    e.finish();
    if (!(c.estimate_lo >= 0.0 && c.estimate_hi <= 1.0 && c.estimate_lo <= c.estimate_hi)) {
      f.fail("estimate_init", "must satisfy 0 <= lo <= hi <= 1");
    }
  }
  if (f.has("noise")) {
    Fields n(f.get("noise"), "noise", source);
    c.noise.process_noise_std = n.positive("process_noise_std", c.noise.process_noise_std);
    c.noise.measurement_noise_std =
        n.positive("measurement_noise_std", c.noise.measurement_noise_std);
    n.finish();
  }
  c.dt = f.positive("dt", c.dt);
  c.seed = f.count("seed", c.seed);
  c.gap_threshold = f.number("gap_threshold", c.gap_threshold);
  if (!(c.gap_threshold >= 0.0)) f.fail("gap_threshold", "must be non-negative");
  if (f.has("soc_window")) {
    Fields w(f.get("soc_window"), "soc_window", source);
    c.soc_lo = w.number("lo", c.soc_lo);
    c.soc_hi = w.number("hi", c.soc_hi);
    w.finish();
    if (!(c.soc_lo >= 0.0 && c.soc_hi <= 1.0 && c.soc_lo < c.soc_hi)) {
      f.fail("soc_window", "must satisfy 0 <= lo < hi <= 1");
    }
  }
  c.obs_gap_tol = f.number("obs_gap_tol", c.obs_gap_tol);
  if (!(c.obs_gap_tol >= 0.0)) f.fail("obs_gap_tol", "must be non-negative");
  f.finish();
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  return parse_study_config(read_json_file(path), path.parent_path(), path.string());
}

}  // namespace parapack
