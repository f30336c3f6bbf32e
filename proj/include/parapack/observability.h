#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "parapack/linearization.h"

namespace parapack {

/// Outcome of the linear observability test.
///
/// The numerical verdict is the rank of the (equilibrated) observability
/// matrix; the symbolic verdict checks the three cell-level conditions
/// directly: nonzero OCV slope, finite series resistance and pairwise
/// distinct relaxation eigenvalues. `observable` requires both. Vandermonde
/// structure makes the numerical rank collapse long before eigenvalues
/// coincide, so `verdicts_agree` flags cases where the two disagree.
struct ObservabilityReport {
  std::size_t n_states = 0;
  std::size_t rank = 0;
  bool observable = false;
  bool numerically_full_rank = false;
  bool symbolic_observable = false;
  bool verdicts_agree = true;
  std::vector<bool> condition_nonzero_gamma;  // per cell
  std::vector<bool> condition_finite_rs;      // per cell
  std::vector<bool> condition_distinct;       // per state (mode)
  std::vector<double> eigenvalues;            // per state (mode)
  std::vector<double> singular_values;        // of the equilibrated matrix
  double min_pairwise_gap = 0.0;              // +inf with fewer than 2 states
  std::vector<std::pair<std::size_t, std::size_t>> offending_pairs;
};

/// Stacks C, CA, ..., CA^(n-1).
Eigen::MatrixXd observability_matrix(const StateSpace& ss);

/// prod_{i<j} (lambda_j - lambda_i): the determinant of the Vandermonde
/// matrix whose rows are lambda^0, lambda^1, ...
double vandermonde_det(std::span<const double> lambdas);

/// |a - b| relative to the mean magnitude; 0 when both are 0.
double relative_gap(double a, double b);

/// Singular values above max(rows, cols) * eps * sigma_max.
std::size_t numerical_rank(const Eigen::MatrixXd& m);

ObservabilityReport check_observability(const StateSpace& ss,
                                        std::span<const double> gammas,
                                        std::span<const double> rs,
                                        double rel_gap_tol = 1e-6);

}  // namespace parapack
