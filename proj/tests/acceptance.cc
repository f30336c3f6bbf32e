// Acceptance suite. Prints one PASS/FAIL line per criterion; exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "parapack/clustering.h"
#include "parapack/kalman.h"
#include "parapack/linearization.h"
#include "parapack/montecarlo.h"
#include "parapack/observability.h"
#include "parapack/pack_sim.h"
#include "parapack/serialization.h"
#include "test_util.h"

namespace parapack {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("AC%d %s %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Round trip: forward under the square cycle, inverse replay of the voltage.
void ac1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  const std::size_t sizes[] = {2, 5, 20};
  const DriveProfile profile = make_profile();
  double worst_coarse = 0.0;
  double worst_fine = 0.0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = sizes[k % 3];
    const int order = (k / 3) % 2 == 0 ? 1 : 3;
    const PackModel pack = testing::random_pack(rng, n, order);
    const PackState s0 = PackState::uniform(pack, 0.1);
    auto max_err = [&](double dt) {
      const Trajectory fwd = simulate(pack, s0, profile, dt);
      std::vector<DriveSample> vs;
      vs.reserve(fwd.size());
      for (std::size_t r = 0; r < fwd.size(); ++r) vs.push_back({fwd.t[r], fwd.v[r]});
      const Trajectory inv =
          simulate(pack, s0, DriveProfile(DriveKind::kVoltage, vs, Interpolation::kLinear), dt);
      if (inv.size() != fwd.size()) return std::numeric_limits<double>::infinity();
      double e = 0.0;
      for (std::size_t r = 0; r < fwd.size(); ++r) {
        e = std::max(e, std::abs(inv.i_total[r] - fwd.i_total[r]));
      }
      return e;
    };
    const double coarse = max_err(0.1);
    const double fine = max_err(0.01);
    worst_coarse = std::max(worst_coarse, coarse);
    worst_fine = std::max(worst_fine, fine);
    worst_ratio = std::min(worst_ratio, coarse / fine);
    if (!(coarse < 1e-3 && fine * 10.0 <= coarse)) {
      ok = false;
      std::printf("  pack %d (N=%zu, order %d): err %.3e at dt 0.1, %.3e at dt 0.01\n", k, n,
                  order, coarse, fine);
    }
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 30.0;
  report(1, ok,
         fmt("20 packs: max err %.3e A at dt 0.1, %.3e A at dt 0.01 (%.0fx); "
             "smallest per-pack shrink %.1fx; %.1f s",
             worst_coarse, worst_fine, worst_coarse / worst_fine, worst_ratio, elapsed));
}

Eigen::MatrixXd vandermonde(const std::vector<double>& l) {
  const auto n = static_cast<Eigen::Index>(l.size());
  Eigen::MatrixXd v(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v(i, j) = std::pow(l[j], static_cast<double>(i));
  }
  return v;
}

void ac2() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> size(1, 8);
  double worst = 0.0;
  int dup_nonzero = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> l(static_cast<std::size_t>(size(rng)));
    for (double& x : l) x = u(rng);
    const double direct = vandermonde(l).fullPivLu().determinant();
    const double product = vandermonde_det(l);
    worst = std::max(worst, std::abs(product - direct) / std::abs(direct));
    if (l.size() >= 2) {
      std::uniform_int_distribution<std::size_t> pick(0, l.size() - 1);
      auto dup = l;
      const std::size_t i = pick(rng);
      std::size_t j = pick(rng);
      if (j == i) j = (i + 1) % l.size();
      dup[j] = dup[i];
      if (vandermonde_det(dup) != 0.0) ++dup_nonzero;
    }
  }
  report(2, worst <= 1e-9 && dup_nonzero == 0,
         fmt("200 sets: max relative deviation %.2e, %d duplicated sets nonzero", worst,
             dup_nonzero));
}

CellParams random_cell(std::mt19937_64& rng, OcvCurvePtr ocv) {
  std::uniform_real_distribution<double> q(2000.0, 20000.0);
  std::uniform_real_distribution<double> r(0.02, 0.5);
  return testing::make_cell(q(rng), r(rng), std::move(ocv));
}

ObservabilityReport observe(const PackModel& pack) {
  const auto eq = equilibrium_from_window(pack);
  const auto ss = linearize_first_order(pack, eq);
  std::vector<double> rs;
  for (const auto& c : pack.cells) rs.push_back(c.r_s);
  return check_observability(ss, eq.gammas, rs);
}

double min_relative_gap(const PackModel& pack) {
  const auto eq = equilibrium_from_window(pack);
  std::vector<double> l;
  for (std::size_t k = 0; k < pack.size(); ++k) {
    l.push_back(cell_eigenvalue(pack.cells[k], eq.gammas[k]));
  }
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < l.size(); ++i) {
    for (std::size_t j = i + 1; j < l.size(); ++j) gap = std::min(gap, relative_gap(l[i], l[j]));
  }
  return gap;
}

void ac3() {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  const auto line = testing::linear_ocv();
  // Flat between 0.3 and 0.7, so the secant slope over [0.4, 0.6] is zero.
  const auto plateau = std::make_shared<const OcvCurve>(
      std::vector<OcvPoint>{{0.0, 3.0}, {0.3, 3.3}, {0.7, 3.3}, {1.0, 3.6}}, "plateau");
  int errors_a = 0, errors_b = 0, errors_c = 0;

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    PackModel pack;
    for (std::size_t k = 0; k + 1 < n; ++k) pack.cells.push_back(random_cell(rng, line));
    std::uniform_int_distribution<std::size_t> pick(0, n - 2);
    pack.cells.push_back(pack.cells[pick(rng)]);
    const auto r = observe(pack);
    if (r.observable || r.symbolic_observable || r.rank != n - 1 || r.offending_pairs.empty()) {
      ++errors_a;
    }
  }

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    PackModel pack;
    for (std::size_t k = 0; k < n; ++k) pack.cells.push_back(random_cell(rng, line));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t flat = pick(rng);
    pack.cells[flat].ocv = plateau;
    const auto r = observe(pack);
    bool flagged_only_flat = true;
    for (std::size_t k = 0; k < n; ++k) {
      flagged_only_flat &= r.condition_nonzero_gamma[k] == (k != flat);
    }
    if (r.observable || r.symbolic_observable || !flagged_only_flat) ++errors_b;
  }

  int drawn = 0;
  while (drawn < 100) {
    const std::size_t n = size(rng);
    PackModel pack;
    for (std::size_t k = 0; k < n; ++k) pack.cells.push_back(random_cell(rng, line));
    if (!(min_relative_gap(pack) > 1e-3)) continue;
    ++drawn;
    const auto r = observe(pack);
    if (!r.observable || r.rank != n) ++errors_c;
  }

  report(3, errors_a + errors_b + errors_c == 0,
         fmt("verdict errors: identical pair %d/100, zero slope %d/100, distinct %d/100",
             errors_a, errors_b, errors_c));
}

void ac4() {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> kdist(2, 8);
  double worst_bound = 0.0;  // fraction of the rounding bound
  int restore_errors = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const CellParams cell = random_cell(rng, nmc_ocv());
    const int k = kdist(rng);
    const std::vector<CellParams> members(static_cast<std::size_t>(k), cell);
    const CellParams merged = aggregate_cluster(members);
    const double gamma = 0.5 + trial * 0.01;
    const double a = cell_eigenvalue(cell, gamma);
    const double b = cell_eigenvalue(merged, gamma);
    // Identical in exact arithmetic. In floating point: k - 1 roundings summing Q,
    // k reciprocals and k - 1 sums for the conductance, one reciprocal back,
    // and two roundings per eigenvalue: (2k + 4) unit roundoffs in total.
    const double bound = (2.0 * k + 4.0) * 0x1p-53;
    worst_bound = std::max(worst_bound, std::abs(a - b) / (std::abs(a) * bound));

    // k copies plus one distinct cell: unobservable until merged.
    PackModel pack;
    pack.cells = members;
    CellParams other = cell;
    other.r_s *= 1.7;
    pack.cells.push_back(other);
    const auto eq = equilibrium_from_window(pack);
    const auto assignment = cluster_by_eigenvalue(pack, eq.gammas, 0.1);
    const auto clustered = build_clustered_pack(pack, assignment);
    const auto ceq = equilibrium_from_window(clustered.as_pack());
    const auto css = clustered_state_space(clustered, ceq);
    std::vector<double> rs;
    for (const auto& c : clustered.clusters) rs.push_back(c.aggregate.r_s);
    const auto merged_report = check_observability(css, ceq.gammas, rs);
    if (observe(pack).observable || assignment.n_clusters() != 2 || !merged_report.observable) {
      ++restore_errors;
    }
  }

  int grouping_errors = 0;
  for (Chemistry chem : {Chemistry::kNmc, Chemistry::kLfp}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      FleetSpec spec;
      spec.chemistry = chem;
      spec.seed = seed;
      const PackModel fleet = generate_fleet(spec);
      const auto eq = equilibrium_from_window(fleet);
      if (cluster_by_eigenvalue(fleet, eq.gammas, 0.1).n_clusters() != 3) ++grouping_errors;
    }
  }
  report(4, worst_bound <= 1.0 && restore_errors == 0 && grouping_errors == 0,
         fmt("merged eigenvalue deviation %.2f of its rounding bound, restoration errors %d/100, "
             "fleets not in 3 groups %d/100",
             worst_bound, restore_errors, grouping_errors));
}

StateSpace random_system(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  StateSpace ss;
  ss.a.resize(n, n);
  ss.b.resize(n);
  ss.c.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ss.b(i) = g(rng);
    ss.c(i) = g(rng);
    for (Eigen::Index j = 0; j < n; ++j) ss.a(i, j) = g(rng);
  }
  ss.drift = Eigen::VectorXd::Zero(n);
  return ss;
}

void ac5() {
  StateSpace scalar;
  scalar.a = Eigen::MatrixXd::Constant(1, 1, -1.0);
  scalar.b = Eigen::VectorXd::Ones(1);
  scalar.c = Eigen::RowVectorXd::Ones(1);
  scalar.drift = Eigen::VectorXd::Zero(1);
  const NoiseSpec unit{1.0, 1.0};
  const double p = solve_care(scalar, unit)(0, 0);
  const double scalar_err = std::abs(p - (std::sqrt(2.0) - 1.0));

  std::mt19937_64 rng(5005);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> logstd(-4.0, 0.0);
  int failures_multi = 0;
  double worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const StateSpace ss = random_system(rng, size(rng));
    const NoiseSpec noise{std::pow(10.0, logstd(rng)), std::pow(10.0, logstd(rng))};
    const Eigen::MatrixXd pm = solve_care(ss, noise);
    const Eigen::VectorXd l = steady_gain(ss, pm, noise);
    const double rel = care_residual(ss, pm, noise) / care_residual_bound(ss, pm, noise) * 1e-8;
    worst_rel = std::max(worst_rel, rel);
    const double asym = (pm - pm.transpose()).norm();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pe(0.5 * (pm + pm.transpose()));
    const double tol = 1e-12 * std::max(1.0, pm.norm());
    const Eigen::VectorXcd cl = (ss.a - l * ss.c).eigenvalues();
    const bool ok = rel < 1e-8 && asym <= tol && pe.eigenvalues().minCoeff() >= -tol &&
                    cl.real().maxCoeff() < 0.0;
    if (!ok) ++failures_multi;
  }
  report(5, scalar_err <= 1e-10 && failures_multi == 0,
         fmt("scalar |p - (sqrt2 - 1)| = %.1e; 100 random systems: %d failures, worst relative "
             "residual %.1e",
             scalar_err, failures_multi, worst_rel));
}

struct StudyOutcome {
  std::string name;
  StudyConfig config;
  StudyResult result;
  double seconds = 0.0;
};

void ac6_to_8() {
  const fs::path configs = fs::path(PARAPACK_SOURCE_DIR) / "configs";
  const unsigned jobs = std::max(4u, std::thread::hardware_concurrency());
  std::vector<StudyOutcome> studies;
  const auto t0 = Clock::now();
  for (const char* name : {"nmc_o1", "nmc_o3", "lfp_o1", "lfp_o3"}) {
    StudyOutcome s;
    s.name = name;
    s.config = load_study_config(configs / (std::string(name) + ".json"));
    const auto ts = Clock::now();
    s.result = run_study(s.config, jobs);
    s.seconds = seconds_since(ts);
    studies.push_back(std::move(s));
  }
  const double total = seconds_since(t0);

  bool ok6 = true;
  std::string detail6;
  for (const auto& s : studies) {
    const double ratio = s.result.final_rmse / s.result.initial_rmse;
    ok6 &= s.config.n_runs == 100 && ratio < 0.2;
    detail6 += fmt("%s ratio %.3f halving %.1f s; ", s.name.c_str(), ratio, s.result.halving_time);
  }
  auto halving = [&](std::size_t i) { return studies[i].result.halving_time; };
  for (std::size_t o = 0; o < 2; ++o) {
    const double nmc = halving(o), lfp = halving(o + 2);
    ok6 &= nmc >= 0.0 && lfp >= 0.0 && nmc < lfp;
  }
  ok6 &= total < 600.0;
  report(6, ok6, detail6 + fmt("total %.1f s on %u threads", total, jobs));

  // Same config again, serial: must reproduce the parallel run byte for byte.
  const auto& ref = studies.front();
  const std::string a = study_summary_json(ref.config, ref.result).dump(2);
  const std::string b = study_summary_json(ref.config, run_study(ref.config, 1)).dump(2);
  const std::string c = study_summary_json(ref.config, run_study(ref.config, 3)).dump(2);
  report(7, a == b && b == c,
         fmt("%s summary (%zu bytes) identical for jobs %u, 1 and 3: %s", ref.name.c_str(),
             a.size(), jobs, a == b && b == c ? "yes" : "no"));

  bool ok8 = true;
  std::string detail8;
  for (const auto& s : studies) {
    const auto& n = s.result.noise_stats;
    const double ev = n.voltage_std / s.config.noise.process_noise_std - 1.0;
    const double ei = n.current_std / s.config.noise.measurement_noise_std - 1.0;
    ok8 &= std::abs(ev) < 0.05 && std::abs(ei) < 0.05;
    detail8 += fmt("%s %.1f uV / %.2f mA; ", s.name.c_str(), n.voltage_std * 1e6,
                   n.current_std * 1e3);
  }
  report(8, ok8, detail8 + "targets 500 uV / 20 mA within 5%");
}

}  // namespace
}  // namespace parapack

int main() {
  using namespace parapack;
  set_warning_handler([](const std::string&) {});
  auto guarded = [](int id, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, ac1);
  guarded(2, ac2);
  guarded(3, ac3);
  guarded(4, ac4);
  guarded(5, ac5);
  guarded(6, ac6_to_8);
  return failures == 0 ? 0 : 1;
}
