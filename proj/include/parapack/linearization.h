#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "parapack/pack_sim.h"

namespace parapack {

/// Linear voltage-in, current-out model
///
///   dx/dt = A x + B u + drift,   y = C x + D u + output_bias.
///
/// With drift and output_bias zero, x, u and y are perturbations from the
/// equilibrium. The affine terms re-express the same model in absolute
/// coordinates (SOC fractions, pack volts, pack amps); the observability
/// and Riccati code only look at A, B, C and D.
struct StateSpace {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::RowVectorXd c;
  double d = 0.0;
  Eigen::VectorXd drift;
  double output_bias = 0.0;
  std::vector<std::string> state_labels;

  Eigen::Index n_states() const { return a.rows(); }
  /// Throws ArgumentError on inconsistent dimensions.
  void validate() const;
  /// C (sI - A)^-1 B + D.
  std::complex<double> transfer(std::complex<double> s) const;
};

/// Per-cell operating point: equilibrium SOC, OCV slope there, and the OCV
/// value the linear model passes through at that SOC.
struct EquilibriumPoint {
  std::vector<double> socs;
  std::vector<double> gammas;
  std::vector<double> ocvs;
};

/// Secant linearization of every cell over [soc_lo, soc_hi]; the
/// equilibrium sits at the window midpoint.
EquilibriumPoint equilibrium_from_window(const PackModel& model, double soc_lo = 0.4,
                                         double soc_hi = 0.6);

/// SOC-only model: A = diag(-gamma_k / (Q_k R_k)), B_k = 1 / (Q_k R_k),
/// C_k = -gamma_k / R_k, D = sum 1 / R_k. RC pairs are ignored.
StateSpace linearize_first_order(const PackModel& model, const EquilibriumPoint& eq);

/// Model with every RC charge as a state, ordered cell by cell.
StateSpace linearize_full(const PackModel& model, const EquilibriumPoint& eq);

/// Modal realization with diagonal A. Throws DiagonalizationError when A
/// has complex or defective eigenvalues.
StateSpace diagonalize_to_first_order(const StateSpace& ss);

}  // namespace parapack
