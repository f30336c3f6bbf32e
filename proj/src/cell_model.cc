#include "parapack/cell_model.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "parapack/errors.h"

namespace parapack {

namespace {

std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

OcvCurve::OcvCurve(std::vector<OcvPoint> points, std::string name)
    : points_(std::move(points)), name_(std::move(name)) {
  if (points_.size() < 2) {
    throw ArgumentError("OCV curve needs at least 2 points");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i].soc) || !std::isfinite(points_[i].ocv)) {
      throw ArgumentError("OCV curve point " + std::to_string(i) +
                          " is not finite");
    }
    if (i > 0 && !(points_[i].soc > points_[i - 1].soc)) {
      throw ArgumentError("OCV curve SOC values must be strictly increasing (point " +
                          std::to_string(i) + ")");
    }
  }
  if (points_.front().soc != 0.0 || points_.back().soc != 1.0) {
    throw ArgumentError("OCV curve must span SOC 0 to 1");
  }
}

double OcvCurve::eval(double soc) const {
  if (!(soc >= 0.0 && soc <= 1.0)) {
    throw DomainError("SOC " + fmt_double(soc) + " outside [0, 1]");
  }
  return eval_clamped(soc);
}

double OcvCurve::eval_clamped(double soc) const {
  soc = std::clamp(soc, 0.0, 1.0);
  auto hi = std::upper_bound(
      points_.begin() + 1, points_.end() - 1, soc,
      [](double s, const OcvPoint& p) { return s < p.soc; });
  const OcvPoint& b = *hi;
  const OcvPoint& a = *(hi - 1);
  const double w = (soc - a.soc) / (b.soc - a.soc);
  return a.ocv + w * (b.ocv - a.ocv);
}

bool OcvCurve::operator==(const OcvCurve& other) const {
  if (points_.size() != other.points_.size()) return false;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].soc != other.points_[i].soc ||
        points_[i].ocv != other.points_[i].ocv) {
      return false;
    }
  }
  return true;
}

void CellParams::validate() const {
  if (!(q > 0.0) || !std::isfinite(q)) {
    throw ArgumentError("cell capacity q must be positive and finite");
  }
  if (!(r_s > 0.0) || !std::isfinite(r_s)) {
    throw ArgumentError("cell series resistance r_s must be positive and finite");
  }
  for (std::size_t j = 0; j < rc_pairs.size(); ++j) {
    const auto& rc = rc_pairs[j];
    if (!(rc.r > 0.0) || !(rc.c > 0.0) || !std::isfinite(rc.r) ||
        !std::isfinite(rc.c)) {
      throw ArgumentError("RC pair " + std::to_string(j) +
                          " must have positive finite r and c");
    }
  }
  if (!ocv) throw ArgumentError("cell has no OCV curve");
}

double ocv_eval(const OcvCurve& curve, double soc) { return curve.eval(soc); }

double ocv_slope(const OcvCurve& curve, double soc_lo, double soc_hi) {
  if (!(soc_lo < soc_hi)) {
    throw ArgumentError("ocv_slope requires soc_lo < soc_hi");
  }
  return (curve.eval(soc_hi) - curve.eval(soc_lo)) / (soc_hi - soc_lo);
}

double cell_eigenvalue(const CellParams& params, double gamma) {
  if (!std::isfinite(gamma)) throw ArgumentError("gamma must be finite");
  params.validate();
  return -gamma / (params.q * params.r_s);
}

OcvCurve read_ocv_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open OCV file: " + path.string());
  std::string line;
  std::vector<OcvPoint> points;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (!header_seen) {
      double a, b;
      if (comma != std::string::npos &&
          parse_double(std::string_view(line).substr(0, comma), a) &&
          parse_double(std::string_view(line).substr(comma + 1), b)) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                          ": missing header row soc,ocv_volts");
      }
      header_seen = true;
      continue;
    }
    OcvPoint p{};
    if (comma == std::string::npos ||
        !parse_double(std::string_view(line).substr(0, comma), p.soc) ||
        !parse_double(std::string_view(line).substr(comma + 1), p.ocv)) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected two numeric columns soc,ocv_volts");
    }
    points.push_back(p);
  }
  if (!header_seen) {
    throw ConfigError(path.string() + ": empty OCV file (header row required)");
  }
  try {
    return OcvCurve(std::move(points), path.stem().string());
  } catch (const ArgumentError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_ocv_csv(const OcvCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write OCV file: " + path.string());
  out << "soc,ocv_volts\n";
  for (const auto& p : curve.points()) {
    out << fmt_double(p.soc) << ',' << fmt_double(p.ocv) << '\n';
  }
}

std::string to_string(Chemistry chemistry) {
  return chemistry == Chemistry::kNmc ? "NMC" : "LFP";
}

Chemistry chemistry_from_string(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "NMC") return Chemistry::kNmc;
  if (upper == "LFP") return Chemistry::kLfp;
  throw ArgumentError("unknown chemistry '" + name + "' (expected NMC or LFP)");
}

OcvCurvePtr nmc_ocv() {
  static const OcvCurvePtr curve = std::make_shared<const OcvCurve>(
      std::vector<OcvPoint>{{0.00, 3.000},
                            {0.05, 3.320},
                            {0.10, 3.450},
                            {0.20, 3.535},
                            {0.30, 3.610},
                            {0.40, 3.685},
                            {0.50, 3.770},
                            {0.60, 3.855},
                            {0.70, 3.940},
                            {0.80, 4.020},
                            {0.90, 4.100},
                            {1.00, 4.200}},
      "nmc");
  return curve;
}

OcvCurvePtr lfp_ocv() {
  static const OcvCurvePtr curve = std::make_shared<const OcvCurve>(
      std::vector<OcvPoint>{{0.00, 2.800},
                            {0.03, 3.050},
                            {0.06, 3.150},
                            {0.10, 3.210},
                            {0.20, 3.240},
                            {0.30, 3.270},
                            {0.40, 3.300},
                            {0.50, 3.330},
                            {0.60, 3.360},
                            {0.70, 3.390},
                            {0.80, 3.420},
                            {0.90, 3.450},
                            {0.95, 3.500},
                            {0.98, 3.580},
                            {1.00, 3.650}},
      "lfp");
  return curve;
}

OcvCurvePtr builtin_ocv(Chemistry chemistry) {
  return chemistry == Chemistry::kNmc ? nmc_ocv() : lfp_ocv();
}

CellParams nominal_cell(Chemistry chemistry, int model_order) {
  if (model_order < 1 || model_order > 3) {
    throw ArgumentError("model order must be 1, 2 or 3");
  }
  CellParams cell;
  std::vector<RcPair> pairs;
  if (chemistry == Chemistry::kNmc) {
    cell.q = 9925.0;
    cell.r_s = 0.102;
    pairs = {{9.4e-3, 6330.0}, {3.63e-2, 6797.0}};
  } else {
    cell.q = 4579.0;
    cell.r_s = 0.261;
    pairs = {{0.187, 8232.0}, {1.75e-2, 1749.0}};
  }
  cell.rc_pairs.assign(pairs.begin(), pairs.begin() + (model_order - 1));
  cell.ocv = builtin_ocv(chemistry);
  return cell;
}

}  // namespace parapack
