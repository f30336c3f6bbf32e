#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "parapack/cell_model.h"

namespace parapack {

/// N cells wired in parallel between two shared terminals.
struct PackModel {
  std::vector<CellParams> cells;

  void validate() const;
  std::size_t size() const { return cells.size(); }
  /// Total number of dynamic states: one SOC plus one charge per RC pair.
  std::size_t n_states() const;
};

struct PackState {
  std::vector<CellState> cell_states;

  /// Every cell at `soc` with discharged RC capacitors.
  static PackState uniform(const PackModel& model, double soc);

  /// Flattens to [soc_1, rc_1..., soc_2, rc_2..., ...].
  std::vector<double> flatten() const;
  static PackState unflatten(const PackModel& model, std::span<const double> x);
};

enum class DriveKind { kCurrent, kVoltage };
enum class Interpolation { kZeroOrderHold, kLinear };

struct DriveSample {
  double t;
  double value;
};

/// Piecewise input signal. Samples start at t = 0; the last sample marks
/// the end of the profile. With zero-order hold, times must be strictly
/// increasing. With linear interpolation, a repeated time encodes a jump
/// (left value first, then right value).
class DriveProfile {
 public:
  DriveProfile(DriveKind kind, std::vector<DriveSample> samples,
               Interpolation interp = Interpolation::kZeroOrderHold);

  DriveKind kind() const { return kind_; }
  Interpolation interpolation() const { return interp_; }
  const std::vector<DriveSample>& samples() const { return samples_; }
  double duration() const { return samples_.back().t; }

  /// Right-continuous value at time t (holds the last value past the end).
  double value_at(double t) const;
  /// Limit of the signal as time approaches t from below.
  double left_limit(double t) const;
  /// Sorted times, including 0 and the end, where the signal may jump or
  /// change its hold value. Integration segments are split there.
  std::vector<double> breakpoints() const;

 private:
  DriveKind kind_;
  std::vector<DriveSample> samples_;
  Interpolation interp_;
};

/// Columnar simulation output. Rows are step boundaries; at a breakpoint
/// where the input jumps two rows share the same time (left limit first).
struct Trajectory {
  std::size_t n_cells = 0;
  std::size_t n_states = 0;
  std::vector<std::size_t> cell_offsets;  // n_cells + 1 block starts
  std::vector<double> t;
  std::vector<double> v;
  std::vector<double> i_total;
  std::vector<double> states;         // row-major, n_states per row
  std::vector<double> cell_currents;  // row-major, n_cells per row
  std::size_t clamp_events = 0;

  std::size_t size() const { return t.size(); }
  std::span<const double> state_row(std::size_t row) const {
    return {states.data() + row * n_states, n_states};
  }
  std::span<const double> current_row(std::size_t row) const {
    return {cell_currents.data() + row * n_cells, n_cells};
  }
  PackState state(const PackModel& model, std::size_t row) const {
    return PackState::unflatten(model, state_row(row));
  }
};

/// Forward-causality output equation V_k = g(soc) + i_k r_s + sum(x_j / c_j).
double cell_terminal_voltage(const CellParams& params, const CellState& state,
                             double i_k);

struct CurrentSplit {
  double v;
  std::vector<double> currents;
};

/// Closed-form solution of the parallel constraints (shared voltage,
/// currents summing to i_total) for the given state.
CurrentSplit solve_current_split(const PackModel& model, const PackState& state,
                                 double i_total);

/// One RK4 step of the current-driven pack.
PackState step_forward(const PackModel& model, const PackState& state,
                       double i_total, double dt);

struct InverseStep {
  PackState state;
  double i_total;  // at the start of the step
};

/// One RK4 step of the voltage-driven pack.
InverseStep step_inverse(const PackModel& model, const PackState& state,
                         double v, double dt);

/// Fixed-step RK4 rollout. Dispatches on profile.kind().
Trajectory simulate(const PackModel& model, const PackState& initial,
                    const DriveProfile& profile, double dt);

/// Columns t,v,i_total,soc_1..soc_N,i_1..i_N and, with full_state,
/// rc_<k>_<j> for every capacitor charge.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out,
                          bool full_state = false);

/// Builds a profile from the `t` column and one named value column of a
/// CSV file (e.g. a trajectory written by write_trajectory_csv).
DriveProfile read_profile_csv(const std::filesystem::path& path,
                              const std::string& value_column, DriveKind kind,
                              Interpolation interp);

/// Receives non-fatal diagnostics (SOC clamping). Defaults to stderr.
void set_warning_handler(std::function<void(const std::string&)> handler);

}  // namespace parapack
