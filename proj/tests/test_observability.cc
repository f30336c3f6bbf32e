#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "parapack/clustering.h"
#include "parapack/errors.h"
#include "parapack/montecarlo.h"
#include "parapack/observability.h"
#include "test_util.h"

namespace parapack {
namespace {

using testing::linear_ocv;
using testing::make_cell;
using testing::make_pack;

StateSpace diag_model(const std::vector<double>& lambda, const std::vector<double>& c) {
  StateSpace ss;
  const auto n = static_cast<Eigen::Index>(lambda.size());
  ss.a = Eigen::VectorXd::Map(lambda.data(), n).asDiagonal();
  ss.b = Eigen::VectorXd::Ones(n);
  ss.c = Eigen::RowVectorXd::Map(c.data(), n);
  ss.d = 1.0;
  return ss;
}

Eigen::MatrixXd vandermonde(const std::vector<double>& l) {
  const auto n = static_cast<Eigen::Index>(l.size());
  Eigen::MatrixXd v(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v(i, j) = std::pow(l[j], static_cast<double>(i));
  }
  return v;
}

TEST(ObservabilityMatrixTest, SmallCases) {
  auto o = observability_matrix(diag_model({-2.0}, {3.0}));
  ASSERT_EQ(o.rows(), 1);
  EXPECT_EQ(o(0, 0), 3.0);
  o = observability_matrix(diag_model({-1.0, -4.0}, {2.0, 5.0}));
  EXPECT_EQ(o, (Eigen::MatrixXd{{2.0, 5.0}, {-2.0, -20.0}}));
}

TEST(ObservabilityMatrixTest, ColumnsFactorIntoVandermonde) {
  const auto pack = make_pack({nominal_cell(Chemistry::kNmc), make_cell(8000.0, 0.2, nmc_ocv())});
  const auto eq = equilibrium_from_window(pack);
  const auto ss = linearize_first_order(pack, eq);
  const auto o = observability_matrix(ss);
  for (int k = 0; k < 2; ++k) {
    const double scale = -eq.gammas[k] / pack.cells[k].r_s;
    EXPECT_NEAR(o(0, k), scale, 1e-12 * std::abs(scale));
    EXPECT_NEAR(o(1, k), scale * ss.a(k, k), 1e-12 * std::abs(scale * ss.a(k, k)));
  }
}

TEST(VandermondeTest, Examples) {
  const std::vector<double> l{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(vandermonde_det(l), 2.0);
  EXPECT_NEAR(vandermonde(l).determinant(), 2.0, 1e-12);
  EXPECT_EQ(vandermonde_det(std::vector<double>{1.5, -2.0, 1.5}), 0.0);
  EXPECT_EQ(vandermonde_det(std::vector<double>{-7.0}), 1.0);
  EXPECT_THROW(vandermonde_det(std::vector<double>{}), ArgumentError);
}

TEST(VandermondeTest, ProductMatchesDirectDeterminant) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(2 + trial % 7);
    for (double& x : l) x = u(rng);
    const double direct = vandermonde(l).fullPivLu().determinant();
    EXPECT_NEAR(vandermonde_det(l), direct, 1e-9 * std::abs(direct));
  }
}

TEST(RelativeGapTest, Definition) {
  EXPECT_DOUBLE_EQ(relative_gap(1.0, 3.0), 1.0);
  EXPECT_EQ(relative_gap(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_gap(-1.0, -1.1), 0.1 / 1.05, 1e-15);  // -1.1 is inexact
}

TEST(CheckObservabilityTest, TwoIdenticalCells) {
  const auto cell = nominal_cell(Chemistry::kNmc);
  const auto pack = make_pack({cell, cell});
  const auto eq = equilibrium_from_window(pack);
  const auto ss = linearize_first_order(pack, eq);
  const std::vector<double> rs{cell.r_s, cell.r_s};
  const auto rep = check_observability(ss, eq.gammas, rs);
  EXPECT_FALSE(rep.observable);
  EXPECT_EQ(rep.rank, 1u);
  ASSERT_EQ(rep.offending_pairs.size(), 1u);
  EXPECT_EQ(rep.offending_pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_TRUE(rep.verdicts_agree);
}

TEST(CheckObservabilityTest, ZeroGammaFlagsConditionOne) {
  const auto pack = make_pack({make_cell(1000.0, 0.1, linear_ocv())});
  EquilibriumPoint eq{{0.5}, {0.0}, {3.6}};
  const auto ss = linearize_first_order(pack, eq);
  const std::vector<double> rs{0.1};
  const auto rep = check_observability(ss, eq.gammas, rs);
  EXPECT_FALSE(rep.observable);
  EXPECT_FALSE(rep.condition_nonzero_gamma[0]);
  EXPECT_TRUE(rep.condition_finite_rs[0]);
}

TEST(CheckObservabilityTest, InfiniteSeriesResistanceFlagsConditionTwo) {
  const auto ss = diag_model({-1e-3, -2e-3}, {-1.0, -2.0});
  const std::vector<double> gammas{1.0, 1.0};
  const std::vector<double> rs{0.1, INFINITY};
  const auto rep = check_observability(ss, gammas, rs);
  EXPECT_FALSE(rep.condition_finite_rs[1]);
  EXPECT_FALSE(rep.observable);
}

TEST(CheckObservabilityTest, FlatPlateauWindowFlagsGamma) {
  // Dead-flat segment between 0.3 and 0.7.
  auto flat = std::make_shared<const OcvCurve>(
      std::vector<OcvPoint>{{0.0, 3.0}, {0.3, 3.3}, {0.7, 3.3}, {1.0, 3.6}}, "flat");
  const auto pack = make_pack({make_cell(4579.0, 0.261, flat), make_cell(4000.0, 0.2, flat)});
  const auto eq = equilibrium_from_window(pack, 0.4, 0.6);
  const auto ss = linearize_first_order(pack, eq);
  const std::vector<double> rs{0.261, 0.2};
  const auto rep = check_observability(ss, eq.gammas, rs);
  EXPECT_FALSE(rep.observable);
  EXPECT_FALSE(rep.condition_nonzero_gamma[0]);
  EXPECT_FALSE(rep.condition_nonzero_gamma[1]);
}

TEST(CheckObservabilityTest, VerdictMatchesSignTest) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  while (checked < 200) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> lam(n), c(n), gammas(n, 1.0), rs(n, 0.1);
    for (std::size_t i = 0; i < n; ++i) {
      lam[i] = -1e-4 * (1.0 + 9.0 * u(rng));
      c[i] = -(0.5 + u(rng));
    }
    if (u(rng) < 0.25) {
      const std::size_t k = rng() % n;
      gammas[k] = 0.0;
      c[k] = 0.0;
      lam[k] = 0.0;
    }
    bool separated = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) separated &= relative_gap(lam[i], lam[j]) > 1e-3;
    }
    if (!separated) continue;
    ++checked;
    const auto rep = check_observability(diag_model(lam, c), gammas, rs);
    bool gammas_ok = true;
    for (double g : gammas) gammas_ok &= g != 0.0;
    const bool expected = vandermonde_det(lam) != 0.0 && gammas_ok;
    EXPECT_EQ(rep.observable, expected);
    EXPECT_TRUE(rep.verdicts_agree);
  }
}

TEST(CheckObservabilityTest, RankInvariantUnderOutputScaling) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  const std::vector<double> lam{-1e-3, -2e-3, -4.5e-3};
  const std::vector<double> gammas(3, 1.0), rs(3, 0.1);
  const auto base = check_observability(diag_model(lam, {1.0, 1.0, 1.0}), gammas, rs);
  for (int t = 0; t < 20; ++t) {
    const auto rep = check_observability(diag_model(lam, {u(rng), -u(rng), u(rng)}), gammas, rs);
    EXPECT_EQ(rep.rank, base.rank);
  }
}

TEST(CheckObservabilityTest, GeneratedFleetAndClusteredModel) {
  FleetSpec spec;
  spec.seed = 2024;
  const auto fleet = generate_fleet(spec);
  const auto eq = equilibrium_from_window(fleet);
  const auto ss = linearize_first_order(fleet, eq);
  std::vector<double> rs;
  for (const auto& c : fleet.cells) rs.push_back(c.r_s);
  const auto rep = check_observability(ss, eq.gammas, rs);
  // Distinct eigenvalues: every cell-level condition holds.
  EXPECT_TRUE(rep.symbolic_observable);
  EXPECT_TRUE(rep.offending_pairs.empty());
  for (bool b : rep.condition_nonzero_gamma) EXPECT_TRUE(b);
  for (bool b : rep.condition_finite_rs) EXPECT_TRUE(b);
  // Twenty nearly equal eigenvalues are far beyond what double precision
  // can resolve as a Vandermonde rank, and the report says so.
  EXPECT_LT(rep.rank, rep.n_states);
  EXPECT_FALSE(rep.verdicts_agree);

  const auto assignment = cluster_by_eigenvalue(fleet, eq.gammas, 0.1);
  const auto clustered = build_clustered_pack(fleet, assignment);
  const auto ceq = equilibrium_from_window(clustered.as_pack());
  const auto css = clustered_state_space(clustered, ceq);
  std::vector<double> crs;
  for (const auto& c : clustered.clusters) crs.push_back(c.aggregate.r_s);
  const auto crep = check_observability(css, ceq.gammas, crs);
  EXPECT_TRUE(crep.observable);
  EXPECT_EQ(crep.rank, 3u);
  // Oracle: dense SVD rank of the raw observability matrix.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(observability_matrix(css));
  const auto& sv = svd.singularValues();
  EXPECT_GT(sv(2), 3 * std::numeric_limits<double>::epsilon() * sv(0));
}

TEST(CheckObservabilityTest, FullOrderModelViaModes) {
  const auto pack = make_pack({nominal_cell(Chemistry::kNmc, 3)});
  const auto eq = equilibrium_from_window(pack);
  const auto ss = diagonalize_to_first_order(linearize_full(pack, eq));
  const std::vector<double> rs{pack.cells[0].r_s};
  const auto rep = check_observability(ss, eq.gammas, rs);
  EXPECT_EQ(rep.n_states, 3u);
  EXPECT_EQ(rep.condition_distinct.size(), 3u);
  EXPECT_TRUE(rep.observable);
}

TEST(NumericalRankTest, Basic) {
  EXPECT_EQ(numerical_rank(Eigen::MatrixXd::Identity(4, 4)), 4u);
  EXPECT_EQ(numerical_rank(Eigen::MatrixXd::Ones(3, 3)), 1u);
  EXPECT_EQ(numerical_rank(Eigen::MatrixXd::Zero(2, 2)), 0u);
}

}  // namespace
}  // namespace parapack
