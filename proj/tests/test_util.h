#pragma once

#include <memory>
#include <random>
#include <vector>

#include "parapack/cell_model.h"
#include "parapack/pack_sim.h"

namespace parapack::testing {

// Straight line from (0, v0) to (1, v1).
inline OcvCurvePtr linear_ocv(double v0 = 3.0, double v1 = 4.2) {
  return std::make_shared<const OcvCurve>(std::vector<OcvPoint>{{0.0, v0}, {1.0, v1}}, "linear");
}

inline CellParams make_cell(double q, double r_s, OcvCurvePtr ocv,
                            std::vector<RcPair> rc = {}) {
  CellParams c;
  c.q = q;
  c.r_s = r_s;
  c.rc_pairs = std::move(rc);
  c.ocv = std::move(ocv);
  return c;
}

inline PackModel make_pack(std::vector<CellParams> cells) {
  PackModel p;
  p.cells = std::move(cells);
  return p;
}

// Heterogeneous pack around a chemistry's nominal cell: Q within +/-20%,
// R_s and RC resistances within +/-30%.
inline PackModel random_pack(std::mt19937_64& rng, std::size_t n, int order) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  PackModel pack;
  for (std::size_t k = 0; k < n; ++k) {
    CellParams c = nominal_cell(coin(rng) ? Chemistry::kNmc : Chemistry::kLfp, order);
    // One chemistry per pack keeps the OCV curves compatible with clustering.
    if (k > 0) c.ocv = pack.cells.front().ocv;
    c.q *= 1.0 + 0.2 * u(rng);
    c.r_s *= 1.0 + 0.3 * u(rng);
    for (auto& rc : c.rc_pairs) rc.r *= 1.0 + 0.3 * u(rng);
    pack.cells.push_back(c);
  }
  return pack;
}

}  // namespace parapack::testing
