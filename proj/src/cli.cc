#include "parapack/cli.h"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "parapack/errors.h"
#include "parapack/serialization.h"

namespace parapack {

namespace {

namespace fs = std::filesystem;

std::optional<fs::path> env_out_dir() {
  const char* v = std::getenv("PARAPACK_OUT_DIR");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

struct SimulateArgs {
  std::string config;
  std::string causality = "forward";
  double dt = 0.1;
  double soc0 = 0.1;
  std::string out;
  bool full_state = false;
  std::string profile_csv;
  std::string column;
  std::string interp;
  SquareCycle cycle;
};

struct ObservabilityArgs {
  std::string config;
  std::vector<double> soc_window{0.4, 0.6};
  double gap_tol = 1e-6;
  std::string model = "first";
};

struct ClusterArgs {
  std::string config;
  std::vector<double> soc_window{0.4, 0.6};
  double gap_threshold = 0.1;
};

struct StudyArgs {
  std::string config;
  unsigned jobs = 1;
  std::string out_dir;
  bool per_run = false;
  double plot_stride_s = 10.0;
};

std::pair<double, double> window(const std::vector<double>& w) {
  if (w.size() != 2) throw ArgumentError("--soc-window expects lo,hi");
  return {w[0], w[1]};
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const PackModel model = load_pack_config(a.config);
  const bool inverse = a.causality == "inverse";
  const DriveKind kind = inverse ? DriveKind::kVoltage : DriveKind::kCurrent;

  std::optional<DriveProfile> profile;
  if (!a.profile_csv.empty()) {
    std::string interp = a.interp;
    if (interp.empty()) interp = inverse ? "linear" : "zoh";
    const Interpolation mode =
        interp == "linear" ? Interpolation::kLinear : Interpolation::kZeroOrderHold;
    const std::string column = a.column.empty() ? (inverse ? "v" : "i_total") : a.column;
    profile.emplace(read_profile_csv(a.profile_csv, column, kind, mode));
  } else if (inverse) {
    throw ArgumentError("--causality inverse needs a voltage profile (--profile-csv)");
  } else {
    profile.emplace(make_profile(a.cycle));
  }

  const Trajectory traj = simulate(model, PackState::uniform(model, a.soc0), *profile, a.dt);

  fs::path target;
  if (!a.out.empty()) {
    target = a.out;
  } else if (auto dir = env_out_dir()) {
    fs::create_directories(*dir);
    target = *dir / "trajectory.csv";
  }
  if (target.empty()) {
    write_trajectory_csv(traj, out, a.full_state);
  } else {
    std::ofstream f(target);
    if (!f) throw ConfigError("cannot write " + target.string());
    write_trajectory_csv(traj, f, a.full_state);
    err << "wrote " << traj.size() << " rows to " << target.string() << '\n';
  }
  if (traj.clamp_events > 0) {
    err << "note: SOC was clamped " << traj.clamp_events << " times\n";
  }
  return kExitOk;
}

void print_conditions(const ObservabilityReport& r, std::ostream& err) {
  err << "cell  gamma!=0  finite_rs\n";
  for (std::size_t k = 0; k < r.condition_nonzero_gamma.size(); ++k) {
    err << std::setw(4) << k + 1 << "  " << std::setw(8)
        << (r.condition_nonzero_gamma[k] ? "ok" : "FAIL") << "  " << std::setw(9)
        << (r.condition_finite_rs[k] ? "ok" : "FAIL") << '\n';
  }
  err << "mode  eigenvalue      distinct\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    err << std::setw(4) << i + 1 << "  " << std::setw(14) << std::setprecision(6)
        << r.eigenvalues[i] << "  " << (r.condition_distinct[i] ? "ok" : "FAIL") << '\n';
  }
  for (const auto& [i, j] : r.offending_pairs) {
    err << "offending pair: modes " << i + 1 << " and " << j + 1 << '\n';
  }
  err << "rank " << r.rank << " of " << r.n_states << "; symbolic "
      << (r.symbolic_observable ? "observable" : "unobservable") << "; numerical "
      << (r.numerically_full_rank ? "full rank" : "rank deficient") << '\n';
  if (!r.verdicts_agree) {
    err << "warning: numerical rank and cell-level conditions disagree "
           "(ill-conditioned observability matrix)\n";
  }
}

int cmd_observability(const ObservabilityArgs& a, std::ostream& out, std::ostream& err) {
  const PackModel model = load_pack_config(a.config);
  const auto [lo, hi] = window(a.soc_window);
  const EquilibriumPoint eq = equilibrium_from_window(model, lo, hi);
  StateSpace ss;
  if (a.model == "full") {
    ss = diagonalize_to_first_order(linearize_full(model, eq));
  } else {
    ss = linearize_first_order(model, eq);
  }
  std::vector<double> rs;
  for (const auto& cell : model.cells) rs.push_back(cell.r_s);
  const ObservabilityReport report = check_observability(ss, eq.gammas, rs, a.gap_tol);
  nlohmann::json doc = {{"model", ss}, {"report", report}};
  out << doc.dump(2) << '\n';
  print_conditions(report, err);
  return report.observable ? kExitOk : kExitUnobservable;
}

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const PackModel model = load_pack_config(a.config);
  const auto [lo, hi] = window(a.soc_window);
  const EquilibriumPoint eq = equilibrium_from_window(model, lo, hi);
  const ClusterAssignment assignment = cluster_by_eigenvalue(model, eq.gammas, a.gap_threshold);
  const ClusteredPack clustered = build_clustered_pack(model, assignment);
  nlohmann::json doc = {{"assignment", assignment}, {"clusters", clustered}};
  out << doc.dump(2) << '\n';
  return kExitOk;
}

int cmd_study(const StudyArgs& a, std::ostream& out, std::ostream& err) {
  const StudyConfig config = load_study_config(a.config);
  fs::path dir = a.out_dir;
  if (dir.empty()) dir = env_out_dir().value_or(fs::path("study_out"));
  StudyResult result;
  try {
    result = run_study(config, a.jobs);
  } catch (const UnobservableModelError& e) {
    err << "error: " << e.what() << '\n';
    print_conditions(e.report(), err);
    return kExitUnobservable;
  }
  ArtifactOptions opts;
  opts.per_run_csv = a.per_run;
  opts.plot_stride_s = a.plot_stride_s;
  write_study_artifacts(config, result, dir, opts);
  out << "clusters: " << result.assignment.n_clusters() << '\n'
      << "initial RMSE: " << result.initial_rmse << '\n'
      << "final RMSE: " << result.final_rmse << '\n'
      << "artifacts: " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel battery pack modelling, observability and SOC estimation"};
  app.name("parapack");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a pack and write its trajectory CSV");
  s->add_option("config", sim.config, "Pack config JSON")->required();
  s->add_option("--causality", sim.causality, "forward (current in) or inverse (voltage in)")
      ->check(CLI::IsMember({"forward", "inverse"}));
  s->add_option("--dt", sim.dt, "Integrator step in seconds")->check(CLI::PositiveNumber);
  s->add_option("--soc0", sim.soc0, "Initial SOC of every cell")->check(CLI::Range(0.0, 1.0));
  s->add_option("--out", sim.out, "Output CSV (default: $PARAPACK_OUT_DIR/trajectory.csv or stdout)");
  s->add_flag("--full-state", sim.full_state, "Also export RC capacitor charges");
  s->add_option("--profile-csv", sim.profile_csv, "Drive profile CSV with a t column");
  s->add_option("--column", sim.column, "Profile value column (default i_total or v)");
  s->add_option("--interp", sim.interp, "zoh or linear (default zoh forward, linear inverse)")
      ->check(CLI::IsMember({"zoh", "linear"}));
  s->add_option("--amps", sim.cycle.amps, "Square-cycle amplitude in amps");
  s->add_option("--charge-s", sim.cycle.charge_s, "Square-cycle charge duration");
  s->add_option("--rest-s", sim.cycle.rest_s, "Square-cycle rest duration");

  ObservabilityArgs obs;
  auto* o = app.add_subcommand("observability", "Linear observability report as JSON");
  o->add_option("config", obs.config, "Pack config JSON")->required();
  o->add_option("--soc-window", obs.soc_window, "Linearization window lo,hi")->delimiter(',');
  o->add_option("--gap-tol", obs.gap_tol, "Relative eigenvalue gap treated as repeated");
  o->add_option("--model", obs.model, "first (SOC only) or full (with RC pairs, modal)")
      ->check(CLI::IsMember({"first", "full"}));

  ClusterArgs clu;
  auto* c = app.add_subcommand("cluster", "Group cells by relaxation eigenvalue");
  c->add_option("config", clu.config, "Pack config JSON")->required();
  c->add_option("--gap-threshold", clu.gap_threshold, "Relative gap that separates clusters");
  c->add_option("--soc-window", clu.soc_window, "Linearization window lo,hi")->delimiter(',');

  StudyArgs st;
  auto* m = app.add_subcommand("study", "Run a Monte Carlo SOC estimation study");
  m->add_option("config", st.config, "Study config JSON")->required();
  m->add_option("--jobs", st.jobs, "Worker threads")->check(CLI::PositiveNumber);
  m->add_option("--out-dir", st.out_dir, "Artifact directory (default: $PARAPACK_OUT_DIR or study_out)");
  m->add_flag("--per-run", st.per_run, "Write run_<k>.csv for every run");
  m->add_option("--plot-stride-s", st.plot_stride_s, "Time decimation of plotdata/ files");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*s) return cmd_simulate(sim, out, err);
    if (*o) return cmd_observability(obs, out, err);
    if (*c) return cmd_cluster(clu, out);
    if (*m) return cmd_study(st, out, err);
  } catch (const UnobservableModelError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnobservable;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::logic_error& e) {  // ArgumentError, DomainError
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const AggregationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace parapack
