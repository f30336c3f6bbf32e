#include "parapack/linearization.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parapack/errors.h"

namespace parapack {

void StateSpace::validate() const {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.size() != n || c.size() != n) {
    throw ArgumentError("state-space matrices have inconsistent dimensions");
  }
  if (drift.size() != 0 && drift.size() != n) {
    throw ArgumentError("state-space drift has the wrong length");
  }
  if (!state_labels.empty() && static_cast<Eigen::Index>(state_labels.size()) != n) {
    throw ArgumentError("state-space labels do not match the state count");
  }
}

std::complex<double> StateSpace::transfer(std::complex<double> s) const {
  validate();
  const Eigen::Index n = n_states();
  if (n == 0) return {d, 0.0};
  Eigen::MatrixXcd m = -a.cast<std::complex<double>>();
  m.diagonal().array() += s;
  const Eigen::VectorXcd x = m.partialPivLu().solve(b.cast<std::complex<double>>());
  return (c.cast<std::complex<double>>() * x)(0) + d;
}

EquilibriumPoint equilibrium_from_window(const PackModel& model, double soc_lo,
                                         double soc_hi) {
  model.validate();
  EquilibriumPoint eq;
  const double mid = 0.5 * (soc_lo + soc_hi);
  for (const auto& cell : model.cells) {
    eq.gammas.push_back(ocv_slope(*cell.ocv, soc_lo, soc_hi));
    eq.socs.push_back(mid);
    eq.ocvs.push_back(0.5 * (cell.ocv->eval(soc_lo) + cell.ocv->eval(soc_hi)));
  }
  return eq;
}

namespace {

void check_equilibrium(const PackModel& model, const EquilibriumPoint& eq) {
  model.validate();
  const std::size_t n = model.size();
  if (eq.socs.size() != n || eq.gammas.size() != n) {
    throw ArgumentError("equilibrium point does not match the pack size");
  }
  if (!eq.ocvs.empty() && eq.ocvs.size() != n) {
    throw ArgumentError("equilibrium OCV list does not match the pack size");
  }
  for (double g : eq.gammas) {
    if (!std::isfinite(g)) throw ArgumentError("gamma must be finite");
  }
}

StateSpace linearize(const PackModel& model, const EquilibriumPoint& eq,
                     bool with_rc) {
  check_equilibrium(model, eq);
  Eigen::Index n = 0;
  for (const auto& cell : model.cells) {
    n += 1 + (with_rc ? static_cast<Eigen::Index>(cell.rc_pairs.size()) : 0);
  }
  StateSpace ss;
  ss.a = Eigen::MatrixXd::Zero(n, n);
  ss.b = Eigen::VectorXd::Zero(n);
  ss.c = Eigen::RowVectorXd::Zero(n);
  ss.drift = Eigen::VectorXd::Zero(n);
  ss.state_labels.reserve(static_cast<std::size_t>(n));

  Eigen::Index o = 0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const auto& cell = model.cells[k];
    const Eigen::Index pairs =
        with_rc ? static_cast<Eigen::Index>(cell.rc_pairs.size()) : 0;
    const double inv_rs = 1.0 / cell.r_s;

    // Sensitivity of the cell current to its own states.
    Eigen::RowVectorXd h(pairs + 1);
    h(0) = -eq.gammas[k] * inv_rs;
    for (Eigen::Index j = 0; j < pairs; ++j) {
      h(j + 1) = -inv_rs / cell.rc_pairs[static_cast<std::size_t>(j)].c;
    }

    ss.a.block(o, o, 1, pairs + 1) = h / cell.q;
    ss.a(o, o) = -eq.gammas[k] / (cell.q * cell.r_s);  // bitwise equal to cell_eigenvalue
    ss.b(o) = inv_rs / cell.q;
    for (Eigen::Index j = 0; j < pairs; ++j) {
      const auto& rc = cell.rc_pairs[static_cast<std::size_t>(j)];
      ss.a.block(o + 1 + j, o, 1, pairs + 1) = h;
      ss.a(o + 1 + j, o + 1 + j) -= 1.0 / (rc.r * rc.c);
      ss.b(o + 1 + j) = inv_rs;
    }
    ss.c.segment(o, pairs + 1) = h;
    ss.d += inv_rs;

    // Intercept of the linearized OCV: g(s) ~= intercept + gamma * s.
    const double ocv_eq = eq.ocvs.empty() ? cell.ocv->eval(eq.socs[k]) : eq.ocvs[k];
    const double intercept = ocv_eq - eq.gammas[k] * eq.socs[k];
    ss.drift.segment(o, pairs + 1) = -intercept * ss.b.segment(o, pairs + 1);
    ss.output_bias -= intercept * inv_rs;

    const std::string prefix = "cell" + std::to_string(k + 1);
    ss.state_labels.push_back(prefix + ".soc");
    for (Eigen::Index j = 0; j < pairs; ++j) {
      ss.state_labels.push_back(prefix + ".rc" + std::to_string(j + 1));
    }
    o += pairs + 1;
  }
  return ss;
}

}  // namespace

StateSpace linearize_first_order(const PackModel& model, const EquilibriumPoint& eq) {
  return linearize(model, eq, false);
}

StateSpace linearize_full(const PackModel& model, const EquilibriumPoint& eq) {
  return linearize(model, eq, true);
}

StateSpace diagonalize_to_first_order(const StateSpace& ss) {
  ss.validate();
  const Eigen::Index n = ss.n_states();
  if (n == 0 || ss.a.isDiagonal(0.0)) return ss;

  Eigen::EigenSolver<Eigen::MatrixXd> es(ss.a);
  if (es.info() != Eigen::Success) {
    throw DiagonalizationError("eigendecomposition of A failed");
  }
  const Eigen::VectorXcd lambda = es.eigenvalues();
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(lambda(i).imag()) > 1e-10 * scale) {
      throw DiagonalizationError("A has complex eigenvalues; RC parameters are not physical");
    }
  }
  Eigen::MatrixXd v = es.eigenvectors().real();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return lambda(i).real() < lambda(j).real();
  });

  Eigen::MatrixXd modes(n, n);
  Eigen::VectorXd lam(n);
  for (Eigen::Index col = 0; col < n; ++col) {
    const Eigen::Index src = order[static_cast<std::size_t>(col)];
    Eigen::VectorXd vec = v.col(src);
    vec.normalize();
    Eigen::Index imax = 0;
    vec.cwiseAbs().maxCoeff(&imax);
    if (vec(imax) < 0.0) vec = -vec;
    modes.col(col) = vec;
    lam(col) = lambda(src).real();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(modes);
  const auto& sv = svd.singularValues();
  if (sv(n - 1) < 1e-10 * sv(0)) {
    throw DiagonalizationError("A is defective (eigenvector matrix is singular)");
  }
  const auto lu = modes.partialPivLu();

  StateSpace out;
  out.a = lam.asDiagonal();
  out.b = lu.solve(ss.b);
  out.c = ss.c * modes;
  out.d = ss.d;
  out.drift = ss.drift.size() == n ? Eigen::VectorXd(lu.solve(ss.drift))
                                   : Eigen::VectorXd::Zero(n);
  out.output_bias = ss.output_bias;
  for (Eigen::Index i = 0; i < n; ++i) out.state_labels.push_back("mode" + std::to_string(i + 1));
  return out;
}

}  // namespace parapack
