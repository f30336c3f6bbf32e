#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "parapack/clustering.h"
#include "parapack/kalman.h"
#include "parapack/observability.h"
#include "parapack/pack_sim.h"

namespace parapack {

/// Synthetic heterogeneous fleet: healthy cells, power-faded cells (series
/// resistance scaled up) and capacity-faded cells (capacity scaled down),
/// each drawn uniformly within +/- jitter of its group nominal.
struct FleetSpec {
  Chemistry chemistry = Chemistry::kNmc;
  std::size_t n_healthy = 14;
  std::size_t n_power_fade = 3;
  std::size_t n_capacity_fade = 3;
  double jitter = 0.03;
  double rs_fade_factor = 2.0;
  double q_fade_factor = 0.8;
  int plant_order = 1;  // 1 or 3
  std::uint64_t seed = 0;
  OcvCurvePtr ocv;  // null: built-in curve for the chemistry

  void validate() const;
  std::size_t size() const { return n_healthy + n_power_fade + n_capacity_fade; }
};

/// Cells are ordered healthy, power-fade, capacity-fade. Only Q and R_s are
/// jittered; RC pairs stay at their characterized values.
PackModel generate_fleet(const FleetSpec& spec);

/// Charge, rest, discharge, rest at constant amplitude.
struct SquareCycle {
  double amps = 1.0;
  double charge_s = 3600.0;
  double rest_s = 600.0;
};

DriveProfile make_profile(const SquareCycle& cycle = {});

struct StudyConfig {
  FleetSpec fleet;
  std::size_t n_runs = 100;
  SquareCycle profile;
  double true_initial_soc = 0.10;
  double estimate_lo = 0.0;
  double estimate_hi = 1.0;
  NoiseSpec noise;
  double dt = 0.1;
  std::uint64_t seed = 0;
  double gap_threshold = 0.1;
  double soc_lo = 0.4;
  double soc_hi = 0.6;
  double obs_gap_tol = 1e-6;

  void validate() const;
};

/// Cluster-SOC estimation error of one run, row-major (time x cluster).
struct ErrorTrajectory {
  std::size_t n_clusters = 0;
  std::vector<double> values;

  std::size_t n_rows() const { return n_clusters == 0 ? 0 : values.size() / n_clusters; }
};

struct RunResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double initial_estimate = 0.0;
  ErrorTrajectory errors;
};

struct NoiseStats {
  std::size_t count = 0;
  double voltage_mean = 0.0;
  double voltage_std = 0.0;
  double current_mean = 0.0;
  double current_std = 0.0;
};

struct StudyResult {
  std::vector<double> t;
  std::vector<RunResult> per_run;
  std::vector<double> rmse;
  double initial_rmse = 0.0;
  double final_rmse = 0.0;
  double halving_time = -1.0;  // -1 when the RMSE never halves
  double time_to_20pct = -1.0;
  NoiseStats noise_stats;

  PackModel fleet;
  ClusterAssignment assignment;
  ClusteredPack clustered;
  FilterDesign design;
  ObservabilityReport observability;

  // Noiseless plant signals and the first run's noisy measurements.
  std::vector<double> v_true, i_true, v_meas_run0, i_meas_run0;
  std::vector<double> true_cluster_soc;  // row-major (time x cluster)
};

/// Raised when the clustered filter model fails the observability test.
class UnobservableModelError : public std::runtime_error {
 public:
  UnobservableModelError(const std::string& what, ObservabilityReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const ObservabilityReport& report() const { return report_; }

 private:
  ObservabilityReport report_;
};

/// Seed for run `run_index` of a study seeded with `study_seed`.
std::uint64_t run_seed(std::uint64_t study_seed, std::size_t run_index);

/// Per-timestep root mean square over runs and clusters.
std::vector<double> compute_rmse(std::span<const ErrorTrajectory> runs);

/// Runs the study on up to `jobs` threads. Output does not depend on `jobs`.
StudyResult run_study(const StudyConfig& config, unsigned jobs = 1);

struct ArtifactOptions {
  bool per_run_csv = false;
  double plot_stride_s = 10.0;
};

/// Writes study_summary.json, rmse_vs_time.csv, optional run_<k>.csv files
/// and a plotdata/ directory under out_dir.
void write_study_artifacts(const StudyConfig& config, const StudyResult& result,
                           const std::filesystem::path& out_dir,
                           const ArtifactOptions& options = {});

}  // namespace parapack
