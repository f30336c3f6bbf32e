#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "parapack/linearization.h"

namespace parapack {

/// Standard deviations of the additive Gaussian noise on the two measured
/// channels. Process noise enters through the voltage input (volts);
/// measurement noise sits on the pack current (amps).
struct NoiseSpec {
  double process_noise_std = 500e-6;
  double measurement_noise_std = 20e-3;

  void validate() const;
  double q() const { return process_noise_std * process_noise_std; }
  double r() const { return measurement_noise_std * measurement_noise_std; }
};

/// Solves A X + X A^T + Q = 0 by Bartels-Stewart on the complex Schur form.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

/// Frobenius norm of A P + P A^T - P C^T R^-1 C P + B Q B^T.
double care_residual(const StateSpace& ss, const Eigen::MatrixXd& p, const NoiseSpec& noise);

/// Acceptance bound on care_residual: 1e-8 times the summed Frobenius norms
/// of the four terms, so the test is relative to the size of the equation.
double care_residual_bound(const StateSpace& ss, const Eigen::MatrixXd& p,
                           const NoiseSpec& noise);

struct CareOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-14;
};

/// Stabilizing solution of the filter Riccati equation by Newton-Kleinman
/// iteration. Starts from L = 0 when A is Hurwitz, otherwise from the gain
/// of the Hamiltonian stable subspace (Bass's method as a fallback). Throws
/// SolverError when the residual bound is missed.
Eigen::MatrixXd solve_care(const StateSpace& ss, const NoiseSpec& noise,
                           const CareOptions& options = {});

/// L = P C^T R^-1.
Eigen::VectorXd steady_gain(const StateSpace& ss, const Eigen::MatrixXd& p,
                            const NoiseSpec& noise);

struct FilterDesign {
  StateSpace ss;
  Eigen::VectorXd gain_l;
  Eigen::MatrixXd covariance_p;
  NoiseSpec noise;
  double residual = 0.0;

  Eigen::VectorXcd closed_loop_eigenvalues() const;
};

FilterDesign design_filter(const StateSpace& ss, const NoiseSpec& noise);

struct FilterStep {
  Eigen::VectorXd xhat;
  double yhat;  // predicted current before the step
};

/// One RK4 step of dx/dt = A x + B u + drift + L (y - yhat) with u and y
/// held over the step. `t` only labels divergence errors.
FilterStep filter_step(const FilterDesign& design, const Eigen::VectorXd& xhat,
                       double u_voltage, double y_current, double dt, double t = 0.0);

struct Measurement {
  double t;
  double v;
  double i;
};

struct FilterTrajectory {
  std::size_t n_states = 0;
  std::vector<double> t;
  std::vector<double> yhat;
  std::vector<double> xhat;  // row-major, n_states per row

  std::size_t size() const { return t.size(); }
  std::span<const double> xhat_row(std::size_t row) const {
    return {xhat.data() + row * n_states, n_states};
  }
};

/// Sequential filter_step rollout. Row i holds the estimate at
/// measurements[i].t and the prediction of measurements[i].i. Each
/// measurement is held until the next one; zero-length intervals (jumps)
/// do not advance the estimate.
FilterTrajectory run_filter(const FilterDesign& design, const Eigen::VectorXd& initial,
                            std::span<const Measurement> measurements);

}  // namespace parapack
