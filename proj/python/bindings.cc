#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "parapack/errors.h"
#include "parapack/serialization.h"

namespace py = pybind11;
using namespace pybind11::literals;

namespace parapack {
namespace {

template <typename T>
std::string dump(const T& v) {
  return nlohmann::json(v).dump();
}

py::array_t<double> as_array(const std::vector<double>& v, std::size_t cols = 0) {
  if (cols == 0) return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
  const auto rows = static_cast<py::ssize_t>(v.size() / cols);
  return py::array_t<double>({rows, static_cast<py::ssize_t>(cols)}, v.data());
}

py::dict trajectory_dict(const Trajectory& traj) {
  py::dict d;
  d["t"] = as_array(traj.t);
  d["v"] = as_array(traj.v);
  d["i_total"] = as_array(traj.i_total);
  d["states"] = as_array(traj.states, traj.n_states);
  d["cell_currents"] = as_array(traj.cell_currents, traj.n_cells);
  d["cell_offsets"] = traj.cell_offsets;
  d["clamp_events"] = traj.clamp_events;
  return d;
}

}  // namespace
}  // namespace parapack

PYBIND11_MODULE(_core, m) {
  using namespace parapack;
  m.doc() = "Parallel battery pack modelling, observability and SOC estimation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<AggregationError>(m, "AggregationError", PyExc_ValueError);

  py::class_<OcvCurve, std::shared_ptr<OcvCurve>>(m, "OcvCurve")
      .def(py::init([](const std::vector<std::pair<double, double>>& pts, std::string name) {
             std::vector<OcvPoint> p;
             for (const auto& [s, v] : pts) p.push_back({s, v});
             return std::make_shared<OcvCurve>(std::move(p), std::move(name));
           }),
           "points"_a, "name"_a = "")
      .def("eval", &OcvCurve::eval, "soc"_a)
      .def("slope", [](const OcvCurve& c, double lo, double hi) { return ocv_slope(c, lo, hi); },
           "soc_lo"_a, "soc_hi"_a)
      .def_property_readonly("name", &OcvCurve::name);

  py::class_<RcPair>(m, "RcPair")
      .def(py::init<double, double>(), "r"_a, "c"_a)
      .def_readwrite("r", &RcPair::r)
      .def_readwrite("c", &RcPair::c);

  py::class_<CellParams>(m, "CellParams")
      .def(py::init([](double q, double r_s, std::vector<RcPair> rc,
                       std::shared_ptr<OcvCurve> ocv) {
             CellParams c{q, r_s, std::move(rc), std::move(ocv)};
             c.validate();
             return c;
           }),
           "q"_a, "r_s"_a, "rc_pairs"_a, "ocv"_a)
      .def_readwrite("q", &CellParams::q)
      .def_readwrite("r_s", &CellParams::r_s)
      .def_readwrite("rc_pairs", &CellParams::rc_pairs)
      .def_property_readonly("order", &CellParams::order)
      .def("to_json", [](const CellParams& c) { return dump(c); });

  py::class_<PackModel>(m, "PackModel")
      .def(py::init([](std::vector<CellParams> cells) {
             PackModel p{std::move(cells)};
             p.validate();
             return p;
           }),
           "cells"_a)
      .def_readonly("cells", &PackModel::cells)
      .def("__len__", &PackModel::size)
      .def_property_readonly("n_states", &PackModel::n_states);

  m.def("nominal_cell",
        [](const std::string& chem, int order) {
          return nominal_cell(chemistry_from_string(chem), order);
        },
        "chemistry"_a, "model_order"_a = 1);
  m.def("cell_eigenvalue", &cell_eigenvalue, "cell"_a, "gamma"_a);

  m.def("solve_current_split",
        [](const PackModel& model, double soc, double i_total) {
          auto s = solve_current_split(model, PackState::uniform(model, soc), i_total);
          return py::make_tuple(s.v, s.currents);
        },
        "model"_a, "soc"_a, "i_total"_a,
        "Terminal voltage and cell currents with every cell at `soc`.");

  m.def("simulate",
        [](const PackModel& model, double soc0, const std::vector<std::pair<double, double>>& samples,
           const std::string& kind, const std::string& interp, double dt) {
          std::vector<DriveSample> s;
          for (const auto& [t, v] : samples) s.push_back({t, v});
          DriveProfile profile(kind == "voltage" ? DriveKind::kVoltage : DriveKind::kCurrent,
                               std::move(s),
                               interp == "linear" ? Interpolation::kLinear
                                                  : Interpolation::kZeroOrderHold);
          return trajectory_dict(simulate(model, PackState::uniform(model, soc0), profile, dt));
        },
        "model"_a, "soc0"_a, "samples"_a, "kind"_a = "current", "interp"_a = "zoh",
        "dt"_a = 0.1);

  m.def("square_cycle",
        [](double amps, double charge_s, double rest_s) {
          std::vector<std::pair<double, double>> out;
          const DriveProfile profile = make_profile({amps, charge_s, rest_s});
          for (const auto& s : profile.samples()) {
            out.emplace_back(s.t, s.value);
          }
          return out;
        },
        "amps"_a = 1.0, "charge_s"_a = 3600.0, "rest_s"_a = 600.0);

  py::class_<StateSpace>(m, "StateSpace")
      .def_readonly("a", &StateSpace::a)
      .def_readonly("b", &StateSpace::b)
      .def_readonly("c", &StateSpace::c)
      .def_readonly("d", &StateSpace::d)
      .def_readonly("drift", &StateSpace::drift)
      .def_readonly("output_bias", &StateSpace::output_bias)
      .def_readonly("state_labels", &StateSpace::state_labels)
      .def("to_json", [](const StateSpace& s) { return dump(s); });

  py::class_<EquilibriumPoint>(m, "EquilibriumPoint")
      .def_readonly("socs", &EquilibriumPoint::socs)
      .def_readonly("gammas", &EquilibriumPoint::gammas)
      .def_readonly("ocvs", &EquilibriumPoint::ocvs);

  m.def("equilibrium_from_window", &equilibrium_from_window, "model"_a, "soc_lo"_a = 0.4,
        "soc_hi"_a = 0.6);
  m.def("linearize_first_order", &linearize_first_order, "model"_a, "eq"_a);
  m.def("linearize_full", &linearize_full, "model"_a, "eq"_a);
  m.def("diagonalize_to_first_order", &diagonalize_to_first_order, "ss"_a);

  m.def("vandermonde_det", [](const std::vector<double>& l) { return vandermonde_det(l); },
        "lambdas"_a);
  m.def("observability_matrix", &observability_matrix, "ss"_a);
  m.def("check_observability",
        [](const StateSpace& ss, const std::vector<double>& gammas,
           const std::vector<double>& rs, double tol) {
          return dump(check_observability(ss, gammas, rs, tol));
        },
        "ss"_a, "gammas"_a, "rs"_a, "rel_gap_tol"_a = 1e-6,
        "Observability report as a JSON string.");

  m.def("cluster",
        [](const PackModel& model, double threshold, double lo, double hi) {
          const auto eq = equilibrium_from_window(model, lo, hi);
          const auto a = cluster_by_eigenvalue(model, eq.gammas, threshold);
          nlohmann::json doc = {{"assignment", a}, {"clusters", build_clustered_pack(model, a)}};
          return doc.dump();
        },
        "model"_a, "gap_threshold"_a = 0.1, "soc_lo"_a = 0.4, "soc_hi"_a = 0.6,
        "Partition and aggregate parameters as a JSON string.");

  m.def("solve_care",
        [](const StateSpace& ss, double q_std, double r_std) {
          return solve_care(ss, NoiseSpec{q_std, r_std});
        },
        "ss"_a, "process_noise_std"_a = 500e-6, "measurement_noise_std"_a = 20e-3);
  m.def("solve_lyapunov", &solve_lyapunov, "a"_a, "q"_a);
  m.def("make_state_space",
        [](Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::RowVectorXd c, double d) {
          StateSpace ss;
          ss.a = std::move(a);
          ss.b = std::move(b);
          ss.c = std::move(c);
          ss.d = d;
          ss.validate();
          return ss;
        },
        "a"_a, "b"_a, "c"_a, "d"_a = 0.0);

  m.def("generate_fleet",
        [](const std::string& chem, std::uint64_t seed, int plant_order, double jitter) {
          FleetSpec s;
          s.chemistry = chemistry_from_string(chem);
          s.seed = seed;
          s.plant_order = plant_order;
          s.jitter = jitter;
          return generate_fleet(s);
        },
        "chemistry"_a = "NMC", "seed"_a = 0, "plant_order"_a = 1, "jitter"_a = 0.03);
  m.def("load_pack_config", [](const std::string& p) { return load_pack_config(p); }, "path"_a);

  m.def("run_study",
        [](const std::string& config_path, unsigned jobs, py::object out_dir) {
          const StudyConfig config = load_study_config(config_path);
          StudyResult r;
          {
            py::gil_scoped_release release;
            r = run_study(config, jobs);
          }
          if (!out_dir.is_none()) {
            write_study_artifacts(config, r, out_dir.cast<std::string>());
          }
          py::dict d;
          d["summary"] = study_summary_json(config, r).dump();
          d["t"] = as_array(r.t);
          d["rmse"] = as_array(r.rmse);
          return d;
        },
        "config_path"_a, "jobs"_a = 1, "out_dir"_a = py::none(),
        "Runs a study config file; returns the summary JSON string, t and RMSE.");
}
