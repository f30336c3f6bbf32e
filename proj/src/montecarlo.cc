#include "parapack/montecarlo.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>
#include <thread>

#include "parapack/errors.h"
#include "parapack/serialization.h"

namespace parapack {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Only mt19937_64 itself is portable; the std distributions are not, so
// uniforms and normals are built here from raw 64-bit draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Marsaglia polar method; keeps the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::string fmt(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

// First time after which the series stays at or below `level`; -1 if never.
double settling_time(const std::vector<double>& t, const std::vector<double>& y,
                     double level) {
  std::size_t i = y.size();
  while (i > 0 && y[i - 1] <= level) --i;
  if (i == y.size()) return -1.0;
  return t[i];
}

struct PlantRecord {
  std::vector<double> t, v, i;
  std::vector<double> cluster_soc;  // row-major
};

PlantRecord simulate_plant(const StudyConfig& config, const PackModel& fleet,
                           const ClusteredPack& clustered) {
  const Trajectory traj = simulate(fleet, PackState::uniform(fleet, config.true_initial_soc),
                                   make_profile(config.profile), config.dt);
  PlantRecord rec;
  rec.t = traj.t;
  rec.v = traj.v;
  rec.i = traj.i_total;
  const std::size_t m = clustered.clusters.size();
  rec.cluster_soc.reserve(traj.size() * m);
  std::vector<double> socs(fleet.size());
  for (std::size_t r = 0; r < traj.size(); ++r) {
    const auto row = traj.state_row(r);
    for (std::size_t k = 0; k < fleet.size(); ++k) socs[k] = row[traj.cell_offsets[k]];
    const auto c = cluster_socs(clustered, fleet, socs);
    rec.cluster_soc.insert(rec.cluster_soc.end(), c.begin(), c.end());
  }
  return rec;
}

struct NoiseSums {
  std::size_t n = 0;
  double v = 0.0, v2 = 0.0, i = 0.0, i2 = 0.0;
};

struct RunOutput {
  RunResult result;
  NoiseSums noise;
  std::vector<double> v_meas, i_meas;  // kept for run 0 only
};

RunOutput run_one(const StudyConfig& config, const FilterDesign& design,
                  const PlantRecord& plant, std::size_t index) {
  RunOutput out;
  out.result.index = index;
  out.result.seed = run_seed(config.seed, index);
  Rng rng(out.result.seed);
  out.result.initial_estimate = rng.uniform(config.estimate_lo, config.estimate_hi);

  const double sv = config.noise.process_noise_std;
  const double si = config.noise.measurement_noise_std;
  const std::size_t rows = plant.t.size();
  std::vector<Measurement> meas(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double nv = sv * rng.normal();
    const double ni = si * rng.normal();
    meas[r] = {plant.t[r], plant.v[r] + nv, plant.i[r] + ni};
    out.noise.v += nv;
    out.noise.v2 += nv * nv;
    out.noise.i += ni;
    out.noise.i2 += ni * ni;
  }
  out.noise.n = rows;
  if (index == 0) {
    out.v_meas.reserve(rows);
    out.i_meas.reserve(rows);
    for (const auto& m : meas) {
      out.v_meas.push_back(m.v);
      out.i_meas.push_back(m.i);
    }
  }

  const Eigen::Index m = design.ss.n_states();
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(m, out.result.initial_estimate);
  FilterTrajectory ft = run_filter(design, x0, meas);
  for (std::size_t j = 0; j < ft.xhat.size(); ++j) ft.xhat[j] -= plant.cluster_soc[j];
  out.result.errors.n_clusters = static_cast<std::size_t>(m);
  out.result.errors.values = std::move(ft.xhat);
  return out;
}

}  // namespace

void FleetSpec::validate() const {
  if (!(jitter >= 0.0 && jitter < 0.5)) throw ArgumentError("jitter must be in [0, 0.5)");
  if (!(rs_fade_factor > 0.0) || !std::isfinite(rs_fade_factor)) {
    throw ArgumentError("rs_fade_factor must be positive");
  }
  if (!(q_fade_factor > 0.0) || !std::isfinite(q_fade_factor)) {
    throw ArgumentError("q_fade_factor must be positive");
  }
  if (plant_order != 1 && plant_order != 3) throw ArgumentError("plant_order must be 1 or 3");
  if (size() == 0) throw ArgumentError("fleet has no cells");
}

PackModel generate_fleet(const FleetSpec& spec) {
  spec.validate();
  CellParams nominal = nominal_cell(spec.chemistry, spec.plant_order);
  if (spec.ocv) nominal.ocv = spec.ocv;

  Rng rng(spec.seed);
  PackModel pack;
  pack.cells.reserve(spec.size());
  auto add = [&](std::size_t count, double q_factor, double rs_factor) {
    for (std::size_t k = 0; k < count; ++k) {
      CellParams cell = nominal;
      cell.q = nominal.q * q_factor * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0));
      cell.r_s = nominal.r_s * rs_factor * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0));
      pack.cells.push_back(std::move(cell));
    }
  };
  add(spec.n_healthy, 1.0, 1.0);
  add(spec.n_power_fade, 1.0, spec.rs_fade_factor);
  add(spec.n_capacity_fade, spec.q_fade_factor, 1.0);
  return pack;
}

DriveProfile make_profile(const SquareCycle& cycle) {
  if (!(cycle.charge_s > 0.0) || !(cycle.rest_s > 0.0)) {
    throw ArgumentError("profile durations must be positive");
  }
  if (!std::isfinite(cycle.amps)) throw ArgumentError("profile amplitude must be finite");
  const double c = cycle.charge_s;
  const double r = cycle.rest_s;
  return DriveProfile(DriveKind::kCurrent, {{0.0, cycle.amps},
                                            {c, 0.0},
                                            {c + r, -cycle.amps},
                                            {2.0 * c + r, 0.0},
                                            {2.0 * (c + r), 0.0}});
}

void StudyConfig::validate() const {
  fleet.validate();
  noise.validate();
  if (n_runs < 1) throw ArgumentError("n_runs must be at least 1");
  if (!(true_initial_soc >= 0.0 && true_initial_soc <= 1.0)) {
    throw ArgumentError("true_initial_soc must be in [0, 1]");
  }
  if (!(estimate_lo >= 0.0 && estimate_hi <= 1.0 && estimate_lo <= estimate_hi)) {
    throw ArgumentError("estimate range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("dt must be positive");
  if (!(gap_threshold >= 0.0)) throw ArgumentError("gap_threshold must be non-negative");
  if (!(soc_lo >= 0.0 && soc_hi <= 1.0 && soc_lo < soc_hi)) {
    throw ArgumentError("SOC window must satisfy 0 <= lo < hi <= 1");
  }
  if (!(obs_gap_tol >= 0.0)) throw ArgumentError("obs_gap_tol must be non-negative");
}

std::uint64_t run_seed(std::uint64_t study_seed, std::size_t run_index) {
  return study_seed + static_cast<std::uint64_t>(run_index);
}

std::vector<double> compute_rmse(std::span<const ErrorTrajectory> runs) {
  if (runs.empty()) throw ArgumentError("compute_rmse: no runs");
  const std::size_t m = runs.front().n_clusters;
  const std::size_t rows = runs.front().n_rows();
  if (m == 0) throw ArgumentError("compute_rmse: trajectories have no clusters");
  for (const auto& r : runs) {
    if (r.n_clusters != m || r.values.size() != rows * m) {
      throw ArgumentError("compute_rmse: trajectories differ in shape");
    }
  }
  std::vector<double> out(rows, 0.0);
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double e = r.values[i * m + j];
        out[i] += e * e;
      }
    }
  }
  const double count = static_cast<double>(runs.size() * m);
  for (double& x : out) x = std::sqrt(x / count);
  return out;
}

StudyResult run_study(const StudyConfig& config, unsigned jobs) {
  config.validate();
  StudyResult res;
  res.fleet = generate_fleet(config.fleet);

  const EquilibriumPoint cell_eq =
      equilibrium_from_window(res.fleet, config.soc_lo, config.soc_hi);
  res.assignment = cluster_by_eigenvalue(res.fleet, cell_eq.gammas, config.gap_threshold);
  res.clustered = build_clustered_pack(res.fleet, res.assignment);

  // The filter is first order whatever the plant order.
  const PackModel aggregates = res.clustered.as_pack();
  const EquilibriumPoint eq =
      equilibrium_from_window(aggregates, config.soc_lo, config.soc_hi);
  const StateSpace ss = clustered_state_space(res.clustered, eq);
  std::vector<double> rs;
  for (const auto& cell : aggregates.cells) rs.push_back(cell.r_s);
  res.observability = check_observability(ss, eq.gammas, rs, config.obs_gap_tol);
  if (!res.observability.observable) {
    throw UnobservableModelError("clustered filter model is unobservable", res.observability);
  }
  res.design = design_filter(ss, config.noise);

  PlantRecord plant = simulate_plant(config, res.fleet, res.clustered);

  const std::size_t n_runs = config.n_runs;
  std::vector<RunOutput> outputs(n_runs);
  std::vector<std::exception_ptr> errors(n_runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n_runs; k = next++) {
      try {
        outputs[k] = run_one(config, res.design, plant, k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(jobs, 1u), n_runs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  NoiseSums sums;
  res.per_run.reserve(n_runs);
  for (auto& out : outputs) {
    sums.n += out.noise.n;
    sums.v += out.noise.v;
    sums.v2 += out.noise.v2;
    sums.i += out.noise.i;
    sums.i2 += out.noise.i2;
    if (out.result.index == 0) {
      res.v_meas_run0 = std::move(out.v_meas);
      res.i_meas_run0 = std::move(out.i_meas);
    }
    res.per_run.push_back(std::move(out.result));
  }
  outputs.clear();

  auto& ns = res.noise_stats;
  ns.count = sums.n;
  const double n = static_cast<double>(sums.n);
  ns.voltage_mean = sums.v / n;
  ns.current_mean = sums.i / n;
  ns.voltage_std = std::sqrt(std::max(0.0, sums.v2 / n - ns.voltage_mean * ns.voltage_mean));
  ns.current_std = std::sqrt(std::max(0.0, sums.i2 / n - ns.current_mean * ns.current_mean));

  std::vector<ErrorTrajectory> trajectories;
  trajectories.reserve(n_runs);
  for (const auto& r : res.per_run) trajectories.push_back(r.errors);
  res.rmse = compute_rmse(trajectories);
  trajectories.clear();

  res.t = std::move(plant.t);
  res.v_true = std::move(plant.v);
  res.i_true = std::move(plant.i);
  res.true_cluster_soc = std::move(plant.cluster_soc);
  res.initial_rmse = res.rmse.front();
  res.final_rmse = res.rmse.back();
  res.halving_time = settling_time(res.t, res.rmse, 0.5 * res.initial_rmse);
  res.time_to_20pct = settling_time(res.t, res.rmse, 0.2 * res.initial_rmse);
  return res;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// Rows kept for plotting: the first row at or after each stride mark, plus
// the final row.
std::vector<std::size_t> plot_rows(const std::vector<double>& t, double stride) {
  std::vector<std::size_t> rows;
  if (t.empty()) return rows;
  if (!(stride > 0.0)) {
    rows.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) rows[i] = i;
    return rows;
  }
  double mark = t.front();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= mark) {
      rows.push_back(i);
      while (mark <= t[i]) mark += stride;
    }
  }
  if (rows.back() != t.size() - 1) rows.push_back(t.size() - 1);
  return rows;
}

}  // namespace

void write_study_artifacts(const StudyConfig& config, const StudyResult& result,
                           const std::filesystem::path& out_dir,
                           const ArtifactOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "plotdata", ec);
  if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());

  {
    auto out = open_out(out_dir / "study_summary.json");
    out << study_summary_json(config, result).dump(2) << '\n';
  }

  const std::size_t m = result.clustered.clusters.size();
  {
    auto out = open_out(out_dir / "rmse_vs_time.csv");
    out << "t,rmse\n";
    for (std::size_t r = 0; r < result.t.size(); ++r) {
      out << fmt(result.t[r]) << ',' << fmt(result.rmse[r]) << '\n';
    }
  }

  if (options.per_run_csv) {
    for (const auto& run : result.per_run) {
      auto out = open_out(out_dir / ("run_" + std::to_string(run.index) + ".csv"));
      out << 't';
      for (std::size_t c = 1; c <= m; ++c) out << ",soc_true_" << c;
      for (std::size_t c = 1; c <= m; ++c) out << ",err_" << c;
      out << '\n';
      for (std::size_t r = 0; r < result.t.size(); ++r) {
        out << fmt(result.t[r]);
        for (std::size_t c = 0; c < m; ++c) out << ',' << fmt(result.true_cluster_soc[r * m + c]);
        for (std::size_t c = 0; c < m; ++c) out << ',' << fmt(run.errors.values[r * m + c]);
        out << '\n';
      }
    }
  }

  const fs::path plot = out_dir / "plotdata";
  {
    auto out = open_out(plot / "fleet.csv");
    out << "cell,q_coulombs,r_s_ohms,cluster\n";
    for (std::size_t k = 0; k < result.fleet.size(); ++k) {
      out << k + 1 << ',' << fmt(result.fleet.cells[k].q) << ','
          << fmt(result.fleet.cells[k].r_s) << ',' << result.assignment.labels[k] + 1 << '\n';
    }
  }

  const auto rows = plot_rows(result.t, options.plot_stride_s);
  {
    auto out = open_out(plot / "pack_signals.csv");
    out << "t,v_true,i_true,v_meas,i_meas\n";
    for (std::size_t r : rows) {
      out << fmt(result.t[r]) << ',' << fmt(result.v_true[r]) << ',' << fmt(result.i_true[r])
          << ',' << fmt(result.v_meas_run0[r]) << ',' << fmt(result.i_meas_run0[r]) << '\n';
    }
  }
  {
    auto out = open_out(plot / "run_errors.csv");
    out << 't';
    for (const auto& run : result.per_run) {
      for (std::size_t c = 1; c <= m; ++c) out << ",run" << run.index << "_err_" << c;
    }
    out << '\n';
    for (std::size_t r : rows) {
      out << fmt(result.t[r]);
      for (const auto& run : result.per_run) {
        for (std::size_t c = 0; c < m; ++c) out << ',' << fmt(run.errors.values[r * m + c]);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(plot / "rmse.csv");
    out << "t,rmse\n";
    for (std::size_t r : rows) out << fmt(result.t[r]) << ',' << fmt(result.rmse[r]) << '\n';
  }
}

}  // namespace parapack
