#include "parapack/pack_sim.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "parapack/errors.h"

namespace parapack {

namespace {

std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}

std::function<void(const std::string&)>& warning_handler() {
  static std::function<void(const std::string&)> handler =
      [](const std::string& msg) { std::cerr << "parapack: warning: " << msg << '\n'; };
  return handler;
}

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(warning_mutex());
  if (warning_handler()) warning_handler()(msg);
}

// Flat-state view of a pack used by the integrators. State layout per cell:
// [soc, rc charge 1, ..., rc charge n].
class PackDynamics {
 public:
  explicit PackDynamics(const PackModel& model) {
    model.validate();
    const std::size_t n = model.size();
    offset_.resize(n + 1);
    inv_q_.resize(n);
    inv_rs_.resize(n);
    ocv_.resize(n);
    std::size_t o = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& cell = model.cells[k];
      offset_[k] = o;
      inv_q_[k] = 1.0 / cell.q;
      inv_rs_[k] = 1.0 / cell.r_s;
      ocv_[k] = cell.ocv.get();
      sum_inv_rs_ += inv_rs_[k];
      for (const auto& rc : cell.rc_pairs) {
        inv_c_.push_back(1.0 / rc.c);
        inv_tau_.push_back(1.0 / (rc.r * rc.c));
      }
      o += 1 + cell.rc_pairs.size();
    }
    offset_[n] = o;
    emf_.resize(n);
    currents_.resize(n);
    for (auto& s : stage_) s.resize(o);
    tmp_.resize(o);
  }

  std::size_t n_cells() const { return inv_q_.size(); }
  std::size_t n_states() const { return offset_.back(); }

  // OCV plus capacitor voltages, i.e. everything but the Ohmic drop.
  void compute_emf(const double* x) {
    for (std::size_t k = 0; k < n_cells(); ++k) {
      const std::size_t o = offset_[k];
      double e = ocv_[k]->eval_clamped(x[o]);
      const std::size_t pairs = offset_[k + 1] - o - 1;
      const std::size_t rc0 = o - k;  // index into inv_c_ for cell k
      for (std::size_t j = 0; j < pairs; ++j) e += x[o + 1 + j] * inv_c_[rc0 + j];
      emf_[k] = e;
    }
  }

  // Fills currents_ and returns the terminal voltage for a pack current.
  double split(const double* x, double i_total) {
    compute_emf(x);
    double acc = i_total;
    for (std::size_t k = 0; k < n_cells(); ++k) acc += emf_[k] * inv_rs_[k];
    const double v = acc / sum_inv_rs_;
    for (std::size_t k = 0; k < n_cells(); ++k) currents_[k] = (v - emf_[k]) * inv_rs_[k];
    return v;
  }

  // Fills currents_ and returns the pack current for a terminal voltage.
  double draw(const double* x, double v) {
    compute_emf(x);
    double total = 0.0;
    for (std::size_t k = 0; k < n_cells(); ++k) {
      currents_[k] = (v - emf_[k]) * inv_rs_[k];
      total += currents_[k];
    }
    return total;
  }

  void derivative(const double* x, double input, DriveKind kind, double* dx) {
    if (kind == DriveKind::kCurrent) {
      split(x, input);
    } else {
      draw(x, input);
    }
    for (std::size_t k = 0; k < n_cells(); ++k) {
      const std::size_t o = offset_[k];
      const double ik = currents_[k];
      dx[o] = ik * inv_q_[k];
      const std::size_t pairs = offset_[k + 1] - o - 1;
      const std::size_t rc0 = o - k;
      for (std::size_t j = 0; j < pairs; ++j) {
        dx[o + 1 + j] = ik - x[o + 1 + j] * inv_tau_[rc0 + j];
      }
    }
  }

  // Classical RK4; u holds the input at t, t + h/2 and t + h.
  void rk4(std::vector<double>& x, const double u[3], DriveKind kind, double h) {
    const std::size_t n = x.size();
    auto& k1 = stage_[0];
    auto& k2 = stage_[1];
    auto& k3 = stage_[2];
    auto& k4 = stage_[3];
    derivative(x.data(), u[0], kind, k1.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k1[i];
    derivative(tmp_.data(), u[1], kind, k2.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k2[i];
    derivative(tmp_.data(), u[1], kind, k3.data());
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + h * k3[i];
    derivative(tmp_.data(), u[2], kind, k4.data());
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }

  // Clamps SOCs into [0, 1]; returns how many were clamped. Throws on NaN/inf.
  std::size_t check_and_clamp(std::vector<double>& x, double t) const {
    std::size_t clamped = 0;
    for (std::size_t k = 0; k < n_cells(); ++k) {
      for (std::size_t i = offset_[k]; i < offset_[k + 1]; ++i) {
        if (!std::isfinite(x[i])) {
          std::ostringstream os;
          os << "non-finite state " << (i - offset_[k]) << " of cell " << k
             << " at t=" << t << " s";
          throw IntegrationError(os.str(), t);
        }
      }
      double& soc = x[offset_[k]];
      if (soc < 0.0 || soc > 1.0) {
        soc = std::clamp(soc, 0.0, 1.0);
        ++clamped;
      }
    }
    return clamped;
  }

  const std::vector<double>& currents() const { return currents_; }
  const std::vector<std::size_t>& offsets() const { return offset_; }

 private:
  std::vector<std::size_t> offset_;
  std::vector<double> inv_q_, inv_rs_, inv_c_, inv_tau_;
  std::vector<const OcvCurve*> ocv_;
  double sum_inv_rs_ = 0.0;
  std::vector<double> emf_, currents_, tmp_;
  std::vector<double> stage_[4];
};

// DriveProfile::value_at for non-decreasing query times, without the
// binary search. Same arithmetic, so results are bitwise identical.
class LinearCursor {
 public:
  explicit LinearCursor(const std::vector<DriveSample>& s) : s_(s) {}

  double value_at(double t) {
    if (i_ > 0 && s_[i_].t > t) i_ = 0;  // queried backwards: restart
    while (i_ + 1 < s_.size() && s_[i_ + 1].t <= t) ++i_;
    const auto& a = s_[i_];
    if (i_ + 1 == s_.size() || a.t > t) return a.value;
    const auto& b = s_[i_ + 1];
    return a.value + (t - a.t) / (b.t - a.t) * (b.value - a.value);
  }

 private:
  const std::vector<DriveSample>& s_;
  std::size_t i_ = 0;
};

void check_dt(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("dt must be positive");
}

void check_state(const PackModel& model, const PackState& state) {
  if (state.cell_states.size() != model.size()) {
    throw ArgumentError("pack state has " + std::to_string(state.cell_states.size()) +
                        " cells, model has " + std::to_string(model.size()));
  }
  for (std::size_t k = 0; k < model.size(); ++k) {
    if (state.cell_states[k].rc_charges.size() != model.cells[k].rc_pairs.size()) {
      throw ArgumentError("cell " + std::to_string(k) +
                          " state does not match its RC pair count");
    }
  }
}

std::string fmt(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace

void set_warning_handler(std::function<void(const std::string&)> handler) {
  std::lock_guard<std::mutex> lock(warning_mutex());
  warning_handler() = std::move(handler);
}

void PackModel::validate() const {
  if (cells.empty()) throw ArgumentError("pack needs at least one cell");
  for (std::size_t k = 0; k < cells.size(); ++k) {
    try {
      cells[k].validate();
    } catch (const ArgumentError& e) {
      throw ArgumentError("cell " + std::to_string(k) + ": " + e.what());
    }
  }
}

std::size_t PackModel::n_states() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += 1 + c.rc_pairs.size();
  return n;
}

PackState PackState::uniform(const PackModel& model, double soc) {
  PackState s;
  s.cell_states.reserve(model.size());
  for (const auto& c : model.cells) {
    s.cell_states.push_back({soc, std::vector<double>(c.rc_pairs.size(), 0.0)});
  }
  return s;
}

std::vector<double> PackState::flatten() const {
  std::vector<double> x;
  for (const auto& cs : cell_states) {
    x.push_back(cs.soc);
    x.insert(x.end(), cs.rc_charges.begin(), cs.rc_charges.end());
  }
  return x;
}

PackState PackState::unflatten(const PackModel& model, std::span<const double> x) {
  if (x.size() != model.n_states()) {
    throw ArgumentError("flat state length does not match the pack");
  }
  PackState s;
  s.cell_states.reserve(model.size());
  std::size_t o = 0;
  for (const auto& c : model.cells) {
    CellState cs;
    cs.soc = x[o];
    cs.rc_charges.assign(x.begin() + o + 1, x.begin() + o + 1 + c.rc_pairs.size());
    o += 1 + c.rc_pairs.size();
    s.cell_states.push_back(std::move(cs));
  }
  return s;
}

DriveProfile::DriveProfile(DriveKind kind, std::vector<DriveSample> samples,
                           Interpolation interp)
    : kind_(kind), samples_(std::move(samples)), interp_(interp) {
  if (samples_.empty()) throw ArgumentError("drive profile has no samples");
  if (samples_.front().t != 0.0) throw ArgumentError("drive profile must start at t = 0");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i].t) || !std::isfinite(samples_[i].value)) {
      throw ArgumentError("drive profile sample " + std::to_string(i) + " is not finite");
    }
    if (i == 0) continue;
    const double prev = samples_[i - 1].t;
    const double cur = samples_[i].t;
    const bool jump_ok = interp_ == Interpolation::kLinear && cur == prev &&
                         (i < 2 || samples_[i - 2].t != cur) && i + 1 < samples_.size();
    if (!(cur > prev) && !jump_ok) {
      throw ArgumentError("drive profile times must be strictly increasing (sample " +
                          std::to_string(i) + ")");
    }
  }
}

double DriveProfile::value_at(double t) const {
  // Last sample with time <= t; for a jump pair this is the right value.
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double s, const DriveSample& d) { return s < d.t; });
  if (it == samples_.begin()) return samples_.front().value;
  const auto& a = *(it - 1);
  if (interp_ == Interpolation::kZeroOrderHold || it == samples_.end()) return a.value;
  const auto& b = *it;
  return a.value + (t - a.t) / (b.t - a.t) * (b.value - a.value);
}

double DriveProfile::left_limit(double t) const {
  // First sample with time >= t.
  auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                             [](const DriveSample& d, double s) { return d.t < s; });
  if (it == samples_.begin()) return samples_.front().value;
  if (it == samples_.end()) return samples_.back().value;
  const auto& a = *(it - 1);
  if (interp_ == Interpolation::kZeroOrderHold) return a.value;
  const auto& b = *it;
  if (b.t == t) return b.value;
  return a.value + (t - a.t) / (b.t - a.t) * (b.value - a.value);
}

std::vector<double> DriveProfile::breakpoints() const {
  std::vector<double> bp{0.0};
  for (std::size_t i = 1; i + 1 < samples_.size(); ++i) {
    const auto& s = samples_[i];
    bool is_break = false;
    if (interp_ == Interpolation::kZeroOrderHold) {
      is_break = s.value != samples_[i - 1].value;
    } else {
      is_break = s.t == samples_[i - 1].t;
    }
    if (is_break && s.t > bp.back()) bp.push_back(s.t);
  }
  if (duration() > bp.back()) bp.push_back(duration());
  return bp;
}

double cell_terminal_voltage(const CellParams& params, const CellState& state,
                             double i_k) {
  if (state.rc_charges.size() != params.rc_pairs.size()) {
    throw ArgumentError("cell state does not match its RC pair count");
  }
  double v = params.ocv->eval_clamped(state.soc) + i_k * params.r_s;
  for (std::size_t j = 0; j < params.rc_pairs.size(); ++j) {
    v += state.rc_charges[j] / params.rc_pairs[j].c;
  }
  return v;
}

CurrentSplit solve_current_split(const PackModel& model, const PackState& state,
                                 double i_total) {
  check_state(model, state);
  PackDynamics dyn(model);
  const auto x = state.flatten();
  CurrentSplit out;
  out.v = dyn.split(x.data(), i_total);
  out.currents = dyn.currents();
  return out;
}

PackState step_forward(const PackModel& model, const PackState& state,
                       double i_total, double dt) {
  check_dt(dt);
  check_state(model, state);
  PackDynamics dyn(model);
  auto x = state.flatten();
  const double u[3] = {i_total, i_total, i_total};
  dyn.rk4(x, u, DriveKind::kCurrent, dt);
  if (dyn.check_and_clamp(x, dt) > 0) warn("SOC clamped to [0, 1] in step_forward");
  return PackState::unflatten(model, x);
}

InverseStep step_inverse(const PackModel& model, const PackState& state, double v,
                         double dt) {
  check_dt(dt);
  check_state(model, state);
  PackDynamics dyn(model);
  auto x = state.flatten();
  InverseStep out;
  out.i_total = dyn.draw(x.data(), v);
  const double u[3] = {v, v, v};
  dyn.rk4(x, u, DriveKind::kVoltage, dt);
  if (dyn.check_and_clamp(x, dt) > 0) warn("SOC clamped to [0, 1] in step_inverse");
  out.state = PackState::unflatten(model, x);
  return out;
}

Trajectory simulate(const PackModel& model, const PackState& initial,
                    const DriveProfile& profile, double dt) {
  check_dt(dt);
  check_state(model, initial);
  PackDynamics dyn(model);
  const DriveKind kind = profile.kind();
  const std::size_t ns = dyn.n_states();
  const std::size_t nc = dyn.n_cells();

  Trajectory traj;
  traj.n_cells = nc;
  traj.n_states = ns;
  traj.cell_offsets = dyn.offsets();
  const auto estimate =
      static_cast<std::size_t>(std::ceil(profile.duration() / dt)) + 8;
  traj.t.reserve(estimate);
  traj.v.reserve(estimate);
  traj.i_total.reserve(estimate);
  traj.states.reserve(estimate * ns);
  traj.cell_currents.reserve(estimate * nc);

  std::vector<double> x = initial.flatten();
  auto record = [&](double t, double input) {
    double v = 0.0;
    double i = 0.0;
    if (kind == DriveKind::kCurrent) {
      v = dyn.split(x.data(), input);
      i = input;
    } else {
      v = input;
      i = dyn.draw(x.data(), input);
    }
    traj.t.push_back(t);
    traj.v.push_back(v);
    traj.i_total.push_back(i);
    traj.states.insert(traj.states.end(), x.begin(), x.end());
    traj.cell_currents.insert(traj.cell_currents.end(), dyn.currents().begin(),
                              dyn.currents().end());
  };

  LinearCursor cursor(profile.samples());
  const auto bp = profile.breakpoints();
  record(0.0, profile.value_at(0.0));
  for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
    const double t0 = bp[s];
    const double t1 = bp[s + 1];
    const auto n_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(n_steps);
    const double hold = profile.value_at(t0);
    auto input = [&](double t, bool at_end) {
      if (profile.interpolation() == Interpolation::kZeroOrderHold) return hold;
      return at_end ? profile.left_limit(t1) : cursor.value_at(t);
    };
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double ta = t0 + static_cast<double>(k) * h;
      const bool last = k + 1 == n_steps;
      const double tb = last ? t1 : t0 + static_cast<double>(k + 1) * h;
      const double u[3] = {input(ta, false), input(0.5 * (ta + tb), false),
                           input(tb, last)};
      dyn.rk4(x, u, kind, tb - ta);
      traj.clamp_events += dyn.check_and_clamp(x, tb);
      if (!last) {
        record(tb, input(tb, false));
        continue;
      }
      const bool final_segment = s + 2 == bp.size();
      const double left = profile.interpolation() == Interpolation::kZeroOrderHold
                              ? hold
                              : profile.left_limit(t1);
      if (final_segment) {
        record(t1, left);
      } else {
        const double right = profile.value_at(t1);
        if (left != right) record(t1, left);
        record(t1, right);
      }
    }
  }
  if (traj.clamp_events > 0) {
    warn("SOC clamped to [0, 1] " + std::to_string(traj.clamp_events) +
         " times during simulation");
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out, bool full_state) {
  const std::size_t nc = traj.n_cells;
  if (nc == 0 || traj.cell_offsets.size() != nc + 1) {
    throw ArgumentError("trajectory has no cell layout");
  }
  const auto& off = traj.cell_offsets;
  out << "t,v,i_total";
  for (std::size_t k = 1; k <= nc; ++k) out << ",soc_" << k;
  for (std::size_t k = 1; k <= nc; ++k) out << ",i_" << k;
  if (full_state) {
    for (std::size_t k = 0; k < nc; ++k) {
      for (std::size_t j = 1; j < off[k + 1] - off[k]; ++j) {
        out << ",rc_" << k + 1 << '_' << j;
      }
    }
  }
  out << '\n';
  std::string line;
  for (std::size_t r = 0; r < traj.size(); ++r) {
    line.clear();
    line += fmt(traj.t[r]);
    line += ',';
    line += fmt(traj.v[r]);
    line += ',';
    line += fmt(traj.i_total[r]);
    const auto xs = traj.state_row(r);
    const auto is = traj.current_row(r);
    for (std::size_t k = 0; k < nc; ++k) {
      line += ',';
      line += fmt(xs[off[k]]);
    }
    for (std::size_t k = 0; k < nc; ++k) {
      line += ',';
      line += fmt(is[k]);
    }
    if (full_state) {
      for (std::size_t k = 0; k < nc; ++k) {
        for (std::size_t i = off[k] + 1; i < off[k + 1]; ++i) {
          line += ',';
          line += fmt(xs[i]);
        }
      }
    }
    line += '\n';
    out << line;
  }
}

DriveProfile read_profile_csv(const std::filesystem::path& path,
                              const std::string& value_column, DriveKind kind,
                              Interpolation interp) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      header.push_back(cell);
    }
  }
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError(path.string() + ":1: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ti = col("t");
  const std::size_t vi = col(value_column);
  std::vector<DriveSample> samples;
  int lineno = 1;
  std::vector<double> fields;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    fields.clear();
    std::size_t start = 0;
    while (start <= line.size()) {
      auto end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      double value = 0.0;
      const char* b = line.data() + start;
      const char* e = line.data() + end;
      while (e > b && (e[-1] == '\r' || e[-1] == ' ')) --e;
      auto [ptr, ec] = std::from_chars(b, e, value);
      if (ec != std::errc() || ptr != e) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                          ": non-numeric field in column " + std::to_string(fields.size() + 1));
      }
      fields.push_back(value);
      start = end + 1;
    }
    if (fields.size() <= std::max(ti, vi)) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    }
    DriveSample s{fields[ti], fields[vi]};
    if (interp == Interpolation::kZeroOrderHold && !samples.empty() &&
        samples.back().t == s.t) {
      samples.back() = s;  // the right-hand value of a jump is what is held
    } else {
      samples.push_back(s);
    }
  }
  try {
    return DriveProfile(kind, std::move(samples), interp);
  } catch (const ArgumentError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace parapack
