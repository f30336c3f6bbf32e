#include "parapack/observability.h"

#include <cmath>
#include <limits>

#include "parapack/errors.h"

namespace parapack {

Eigen::MatrixXd observability_matrix(const StateSpace& ss) {
  ss.validate();
  const Eigen::Index n = ss.n_states();
  Eigen::MatrixXd o(n, n);
  Eigen::RowVectorXd row = ss.c;
  for (Eigen::Index i = 0; i < n; ++i) {
    o.row(i) = row;
    row = row * ss.a;
  }
  return o;
}

double vandermonde_det(std::span<const double> lambdas) {
  if (lambdas.empty()) throw ArgumentError("vandermonde_det needs at least one value");
  double det = 1.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (std::size_t j = i + 1; j < lambdas.size(); ++j) det *= lambdas[j] - lambdas[i];
  }
  return det;
}

double relative_gap(double a, double b) {
  const double scale = 0.5 * (std::abs(a) + std::abs(b));
  if (scale == 0.0) return 0.0;
  return std::abs(a - b) / scale;
}

std::size_t numerical_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++r;
  }
  return r;
}

namespace {

// Rank-preserving rescaling of the observability matrix: time is scaled so
// the fastest mode has unit rate (row scaling), then columns and rows are
// normalized. Without it the rows CA^i span hundreds of decades.
Eigen::MatrixXd equilibrated_observability(const StateSpace& ss) {
  StateSpace scaled = ss;
  const double rate = ss.a.cwiseAbs().maxCoeff();
  if (rate > 0.0) scaled.a /= rate;
  Eigen::MatrixXd o = observability_matrix(scaled);
  for (Eigen::Index j = 0; j < o.cols(); ++j) {
    const double nrm = o.col(j).norm();
    if (nrm > 0.0) o.col(j) /= nrm;
  }
  for (Eigen::Index i = 0; i < o.rows(); ++i) {
    const double nrm = o.row(i).norm();
    if (nrm > 0.0) o.row(i) /= nrm;
  }
  return o;
}

}  // namespace

ObservabilityReport check_observability(const StateSpace& ss,
                                        std::span<const double> gammas,
                                        std::span<const double> rs,
                                        double rel_gap_tol) {
  ss.validate();
  const auto n = static_cast<std::size_t>(ss.n_states());
  if (gammas.size() != rs.size()) {
    throw ArgumentError("gamma and r_s lists differ in length");
  }
  if (gammas.empty() || gammas.size() > n) {
    throw ArgumentError("per-cell lists do not match the model (" +
                        std::to_string(gammas.size()) + " cells, " + std::to_string(n) +
                        " states)");
  }
  if (!(rel_gap_tol >= 0.0)) throw ArgumentError("rel_gap_tol must be non-negative");

  ObservabilityReport rep;
  rep.n_states = n;

  bool cells_ok = true;
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    const bool g_ok = gammas[k] != 0.0 && std::isfinite(gammas[k]);
    const bool r_ok = std::isfinite(rs[k]) && rs[k] > 0.0;
    rep.condition_nonzero_gamma.push_back(g_ok);
    rep.condition_finite_rs.push_back(r_ok);
    cells_ok = cells_ok && g_ok && r_ok;
  }

  // Modal form: eigenvalues plus each mode's output weight.
  const StateSpace modal = diagonalize_to_first_order(ss);
  const double c_scale = modal.c.cwiseAbs().maxCoeff();
  bool modes_visible = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    rep.eigenvalues.push_back(modal.a(ii, ii));
    if (!(std::abs(modal.c(ii)) > 1e-12 * c_scale)) modes_visible = false;
  }

  rep.condition_distinct.assign(n, true);
  rep.min_pairwise_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double gap = relative_gap(rep.eigenvalues[i], rep.eigenvalues[j]);
      rep.min_pairwise_gap = std::min(rep.min_pairwise_gap, gap);
      if (gap < rel_gap_tol || gap == 0.0) {
        rep.offending_pairs.emplace_back(i, j);
        rep.condition_distinct[i] = false;
        rep.condition_distinct[j] = false;
      }
    }
  }

  const Eigen::MatrixXd o = equilibrated_observability(ss);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(o);
  rep.singular_values.assign(svd.singularValues().data(),
                             svd.singularValues().data() + svd.singularValues().size());
  rep.rank = numerical_rank(o);

  rep.numerically_full_rank = rep.rank == n;
  rep.symbolic_observable = cells_ok && modes_visible && rep.offending_pairs.empty();
  rep.verdicts_agree = rep.numerically_full_rank == rep.symbolic_observable;
  rep.observable = rep.numerically_full_rank && rep.symbolic_observable;
  return rep;
}

}  // namespace parapack
