#include "parapack/kalman.h"

#include <cmath>
#include <complex>
#include <sstream>

#include "parapack/errors.h"

namespace parapack {

void NoiseSpec::validate() const {
  if (!(process_noise_std > 0.0) || !std::isfinite(process_noise_std)) {
    throw ArgumentError("process noise std must be positive");
  }
  if (!(measurement_noise_std > 0.0) || !std::isfinite(measurement_noise_std)) {
    throw ArgumentError("measurement noise std must be positive");
  }
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  using cd = std::complex<double>;
  const Eigen::Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n) {
    throw ArgumentError("solve_lyapunov: dimension mismatch");
  }
  if (n == 0) return Eigen::MatrixXd(0, 0);
  Eigen::ComplexSchur<Eigen::MatrixXd> schur(a);
  if (schur.info() != Eigen::Success) {
    throw SolverError("Schur decomposition failed", std::nan(""));
  }
  const Eigen::MatrixXcd& t = schur.matrixT();
  const Eigen::MatrixXcd& u = schur.matrixU();
  // T Y + Y T^H = F with Y = U^H X U.
  const Eigen::MatrixXcd f = -(u.adjoint() * q.cast<cd>() * u);
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  const double scale = t.cwiseAbs().maxCoeff();
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      cd acc = f(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) acc -= t(i, k) * y(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) acc -= y(i, k) * std::conj(t(j, k));
      const cd denom = t(i, i) + std::conj(t(j, j));
      if (std::abs(denom) <= 1e-14 * scale) {
        throw SolverError("Lyapunov operator is singular (eigenvalues sum to zero)",
                          std::nan(""));
      }
      y(i, j) = acc / denom;
    }
  }
  Eigen::MatrixXd x = (u * y * u.adjoint()).real();
  return 0.5 * (x + x.transpose());
}

double care_residual(const StateSpace& ss, const Eigen::MatrixXd& p, const NoiseSpec& noise) {
  const Eigen::MatrixXd pct = p * ss.c.transpose();
  const Eigen::MatrixXd res = ss.a * p + p * ss.a.transpose() - pct * pct.transpose() / noise.r() +
                              ss.b * ss.b.transpose() * noise.q();
  return res.norm();
}

double care_residual_bound(const StateSpace& ss, const Eigen::MatrixXd& p,
                           const NoiseSpec& noise) {
  const Eigen::MatrixXd pc = p * ss.c.transpose();
  const double scale = 2.0 * (ss.a * p).norm() + (pc * pc.transpose()).norm() / noise.r() +
                       (ss.b * ss.b.transpose()).norm() * noise.q();
  return 1e-8 * std::max(scale, 1e-300);
}

namespace {

bool is_hurwitz(const Eigen::MatrixXd& a) {
  if (a.rows() == 0) return true;
  if (a.isDiagonal(0.0)) return (a.diagonal().array() < 0.0).all();
  return (Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().real().array() < 0.0).all();
}

bool stabilizes(const StateSpace& ss, const Eigen::VectorXd& l) {
  return l.allFinite() && is_hurwitz(ss.a - l * ss.c);
}

// Gain from the stable invariant subspace [U1; U2] of the Hamiltonian
// [A^T, -C^T R^-1 C; -B Q B^T, -A]: P = U2 U1^-1. Empty if U1 is singular.
Eigen::VectorXd hamiltonian_gain(const StateSpace& ss, const NoiseSpec& noise) {
  const Eigen::Index n = ss.n_states();
  Eigen::MatrixXd h(2 * n, 2 * n);
  h << ss.a.transpose(), -ss.c.transpose() * ss.c / noise.r(),
      -ss.b * ss.b.transpose() * noise.q(), -ss.a;
  const Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) return {};
  Eigen::MatrixXcd u(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (k == n) return {};
      u.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) return {};
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(u.topRows(n).transpose());
  const Eigen::MatrixXd p = lu.solve(u.bottomRows(n).transpose()).transpose().real();
  return 0.5 * (p + p.transpose()) * ss.c.transpose() / noise.r();
}

// Bass's method on the dual pair (A^T, C^T).
Eigen::VectorXd bass_gain(const StateSpace& ss) {
  const double beta = ss.a.norm() + 1.0;
  Eigen::MatrixXd shifted = ss.a.transpose();
  shifted.diagonal().array() += beta;
  const Eigen::MatrixXd ctc = ss.c.transpose() * ss.c;
  const Eigen::MatrixXd z = solve_lyapunov(shifted, -2.0 * ctc);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(z);
  const double min_pivot = ldlt.vectorD().cwiseAbs().minCoeff();
  if (ldlt.info() != Eigen::Success || !(min_pivot > 1e-13 * ldlt.vectorD().cwiseAbs().maxCoeff())) {
    throw SolverError("no stabilizing initial gain: the model is likely unobservable",
                      std::nan(""));
  }
  Eigen::VectorXd l = ldlt.solve(ss.c.transpose());
  if (!stabilizes(ss, l)) {
    throw SolverError("initial gain does not stabilize A - LC: the model is likely unobservable",
                      std::nan(""));
  }
  return l;
}

}  // namespace

Eigen::MatrixXd solve_care(const StateSpace& ss, const NoiseSpec& noise,
                           const CareOptions& options) {
  ss.validate();
  noise.validate();
  const Eigen::Index n = ss.n_states();
  const Eigen::MatrixXd forcing = ss.b * ss.b.transpose() * noise.q();
  const double r_inv = 1.0 / noise.r();

  Eigen::VectorXd l = Eigen::VectorXd::Zero(n);
  if (!is_hurwitz(ss.a)) {
    l = hamiltonian_gain(ss, noise);
    if (!stabilizes(ss, l)) l = bass_gain(ss);
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd closed = ss.a - l * ss.c;
    const Eigen::MatrixXd rhs = forcing + noise.r() * l * l.transpose();
    const Eigen::MatrixXd next = solve_lyapunov(closed, rhs);
    const double change = (next - p).norm();
    p = next;
    l = p * ss.c.transpose() * r_inv;
    if (change <= options.step_tolerance * p.norm()) break;
  }

  const double residual = care_residual(ss, p, noise);
  const double bound = care_residual_bound(ss, p, noise);
  if (!(residual <= bound)) {
    std::ostringstream os;
    os << "Riccati iteration did not converge: residual " << residual << " > " << bound;
    if (!is_hurwitz(ss.a - l * ss.c)) os << " (closed loop unstable; model likely unobservable)";
    throw SolverError(os.str(), residual);
  }
  return p;
}

Eigen::VectorXd steady_gain(const StateSpace& ss, const Eigen::MatrixXd& p,
                            const NoiseSpec& noise) {
  noise.validate();
  return p * ss.c.transpose() / noise.r();
}

Eigen::VectorXcd FilterDesign::closed_loop_eigenvalues() const {
  const Eigen::MatrixXd m = ss.a - gain_l * ss.c;
  if (m.rows() == 0) return {};
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues();
}

FilterDesign design_filter(const StateSpace& ss, const NoiseSpec& noise) {
  FilterDesign design;
  design.ss = ss;
  if (design.ss.drift.size() == 0) design.ss.drift = Eigen::VectorXd::Zero(ss.n_states());
  design.noise = noise;
  design.covariance_p = solve_care(ss, noise);
  design.gain_l = steady_gain(ss, design.covariance_p, noise);
  design.residual = care_residual(ss, design.covariance_p, noise);
  return design;
}

namespace {

Eigen::VectorXd drift_of(const FilterDesign& d) {
  return d.ss.drift.size() == d.ss.n_states() ? d.ss.drift
                                              : Eigen::VectorXd::Zero(d.ss.n_states());
}

double predict(const FilterDesign& d, const Eigen::VectorXd& x, double u) {
  return d.ss.c.dot(x) + d.ss.d * u + d.ss.output_bias;
}

void check_finite(const Eigen::VectorXd& x, double t) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << "filter diverged (non-finite estimate) at t=" << t << " s";
    throw IntegrationError(os.str(), t);
  }
}

}  // namespace

FilterStep filter_step(const FilterDesign& design, const Eigen::VectorXd& xhat,
                       double u_voltage, double y_current, double dt, double t) {
  if (!(dt > 0.0)) throw ArgumentError("dt must be positive");
  if (xhat.size() != design.ss.n_states()) {
    throw ArgumentError("estimate length does not match the filter model");
  }
  const Eigen::VectorXd drift = drift_of(design);
  auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const double innovation = y_current - predict(design, x, u_voltage);
    return design.ss.a * x + design.ss.b * u_voltage + drift + design.gain_l * innovation;
  };
  FilterStep out;
  out.yhat = predict(design, xhat, u_voltage);
  const Eigen::VectorXd k1 = f(xhat);
  const Eigen::VectorXd k2 = f(xhat + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = f(xhat + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = f(xhat + dt * k3);
  out.xhat = xhat + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check_finite(out.xhat, t + dt);
  return out;
}

FilterTrajectory run_filter(const FilterDesign& design, const Eigen::VectorXd& initial,
                            std::span<const Measurement> measurements) {
  const Eigen::Index n = design.ss.n_states();
  if (initial.size() != n) throw ArgumentError("initial estimate has the wrong length");
  for (std::size_t i = 1; i < measurements.size(); ++i) {
    if (measurements[i].t < measurements[i - 1].t) {
      throw ArgumentError("measurements must be sorted by time");
    }
  }

  FilterTrajectory traj;
  traj.n_states = static_cast<std::size_t>(n);
  if (measurements.empty()) {
    traj.t.push_back(0.0);
    traj.yhat.push_back(std::nan(""));
    traj.xhat.assign(initial.data(), initial.data() + n);
    return traj;
  }
  traj.t.reserve(measurements.size());
  traj.yhat.reserve(measurements.size());
  traj.xhat.reserve(measurements.size() * traj.n_states);

  // RK4 applied to the linear observer dx/dt = M x + g is exactly
  // x+ = Phi x + Gamma g with the degree-4 Taylor polynomials below; both
  // are cached per step length.
  const Eigen::MatrixXd m = design.ss.a - design.gain_l * design.ss.c;
  const Eigen::VectorXd drift = drift_of(design);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  double cached_h = -1.0;
  Eigen::MatrixXd phi(n, n), gamma(n, n);
  auto propagators = [&](double h) {
    if (h == cached_h) return;
    const Eigen::MatrixXd hm = h * m;
    const Eigen::MatrixXd hm2 = hm * hm;
    const Eigen::MatrixXd hm3 = hm2 * hm;
    phi = eye + hm + hm2 / 2.0 + hm3 / 6.0 + hm3 * hm / 24.0;
    gamma = h * (eye + hm / 2.0 + hm2 / 6.0 + hm3 / 24.0);
    cached_h = h;
  };

  Eigen::VectorXd x = initial;
  Eigen::VectorXd forcing(n), next(n);
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const auto& meas = measurements[i];
    traj.t.push_back(meas.t);
    traj.yhat.push_back(predict(design, x, meas.v));
    traj.xhat.insert(traj.xhat.end(), x.data(), x.data() + n);
    if (i + 1 == measurements.size()) break;
    const double h = measurements[i + 1].t - meas.t;
    if (h == 0.0) continue;
    propagators(h);
    forcing = design.ss.b * meas.v + drift +
              design.gain_l * (meas.i - design.ss.d * meas.v - design.ss.output_bias);
    next.noalias() = phi * x;
    next.noalias() += gamma * forcing;
    x = next;
    if (!x.allFinite()) check_finite(x, measurements[i + 1].t);
  }
  return traj;
}

}  // namespace parapack
