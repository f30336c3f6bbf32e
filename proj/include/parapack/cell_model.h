#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace parapack {

struct OcvPoint {
  double soc;
  double ocv;
};

/// Tabulated open-circuit voltage as a function of state of charge.
///
/// Points must be strictly increasing in SOC and span exactly [0, 1].
/// Evaluation is piecewise linear between points.
class OcvCurve {
 public:
  explicit OcvCurve(std::vector<OcvPoint> points, std::string name = {});

  const std::vector<OcvPoint>& points() const { return points_; }
  const std::string& name() const { return name_; }

  /// Piecewise-linear OCV. Throws DomainError outside [0, 1].
  double eval(double soc) const;

  /// Same as eval() with soc clamped to [0, 1] first; used inside the
  /// integrators where a transient overshoot must not abort a run.
  double eval_clamped(double soc) const;

  bool operator==(const OcvCurve& other) const;

 private:
  std::vector<OcvPoint> points_;
  std::string name_;
};

using OcvCurvePtr = std::shared_ptr<const OcvCurve>;

struct RcPair {
  double r;  // ohms
  double c;  // farads
};

/// Equivalent-circuit parameters of one cell: capacity, Ohmic resistance,
/// a chain of RC pairs, and the OCV-SOC relationship.
struct CellParams {
  double q = 0.0;    // coulombs
  double r_s = 0.0;  // ohms
  std::vector<RcPair> rc_pairs;
  OcvCurvePtr ocv;

  /// Throws ArgumentError when any invariant is violated.
  void validate() const;
  std::size_t order() const { return rc_pairs.size(); }
};

struct CellState {
  double soc = 0.0;
  std::vector<double> rc_charges;  // coulombs, one per RC pair
};

double ocv_eval(const OcvCurve& curve, double soc);

/// Secant slope of the curve over [soc_lo, soc_hi] in volts per unit SOC.
double ocv_slope(const OcvCurve& curve, double soc_lo, double soc_hi);

/// Potentiostatic current relaxation eigenvalue -gamma / (q * r_s).
double cell_eigenvalue(const CellParams& params, double gamma);

/// Reads a two-column `soc,ocv_volts` CSV with a header row.
OcvCurve read_ocv_csv(const std::filesystem::path& path);
void write_ocv_csv(const OcvCurve& curve, const std::filesystem::path& path);

enum class Chemistry { kNmc, kLfp };

std::string to_string(Chemistry chemistry);
Chemistry chemistry_from_string(const std::string& name);

// Synthetic stand-ins shaped after laboratory CCCV curves: NMC rises
// steadily, LFP sits on a shallow plateau between steep knees.
OcvCurvePtr nmc_ocv();
OcvCurvePtr lfp_ocv();
OcvCurvePtr builtin_ocv(Chemistry chemistry);

/// Characterized cell as a model of the given order: 1 is OCV plus R_s,
/// each further order adds one RC pair (up to 3).
CellParams nominal_cell(Chemistry chemistry, int model_order = 1);

}  // namespace parapack
