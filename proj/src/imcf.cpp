#include "qsm/imcf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qsm/error.hpp"
#include "qsm/radial.hpp"

namespace qsm {

namespace {

constexpr int kInterpolationWidth = 8;
constexpr double kStationMatch = 1e-13;
constexpr double kEquipotentialTolerance = 1e-10;
constexpr double kSymmetryTolerance = 1e-10;

std::vector<double> log_radii(const std::vector<double>& radii) {
  std::vector<double> s(radii.size());
  for (std::size_t k = 0; k < radii.size(); ++k) s[k] = std::log(radii[k]);
  return s;
}

template <typename Get>
ModeCoeffs interpolate(const GridPtr& grid, const Stencil& st, Get get) {
  ModeCoeffs out = ModeCoeffs::zeros(grid);
  for (std::size_t j = 0; j < st.weights.size(); ++j) out.c += st.weights[j] * get(st.start + j).c;
  return out;
}

AngularField one_plus(const ModeCoeffs& dev) {
  AngularField f = synthesize(dev);
  f.v.array() += 1.0;
  return f;
}

double power_mean_exponent(int n) { return double(n - 2) / double(n - 1); }

double slice_mass(const SliceIntegrals& s, int n) {
  return s.int_dv_dnu / (double(n - 2) * s.unit_area);
}

}  // namespace

double imcf_radius(double t, double r0, int n) {
  if (t < 0.0) throw Error(ErrorCode::kInvalidArgument, "imcf time must be nonnegative");
  if (!(r0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "imcf needs a positive radius");
  if (n < kMinDimension || n > kMaxDimension) {
    throw Error(ErrorCode::kUnsupportedDimension, "dimension " + std::to_string(n));
  }
  return r0 * std::exp(t / double(n - 1));
}

SliceData slice_data(const QuasiSphericalMetric& g, const PotentialField& v, double r) {
  require_compatible(g, v);
  const auto& radii = g.radii();
  const double lo = radii.front(), hi = radii.back();
  if (!(r >= lo * (1.0 - kStationMatch) && r <= hi * (1.0 + kStationMatch))) {
    throw Error(ErrorCode::kStationOutOfRange,
                "slice radius " + std::to_string(r) + " outside the stations");
  }
  SliceData d;
  d.r = r;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (std::abs(radii[k] - r) <= kStationMatch * r) {
      d.u = g.lapse(k);
      d.v = v.value(k);
      d.v_r = v.radial(k);
      return d;
    }
  }
  const GridPtr& grid = g.grid();
  const Stencil st = interpolation_stencil(log_radii(radii), std::log(r), kInterpolationWidth);
  d.u = one_plus(interpolate(grid, st, [&](std::size_t k) { return g.lapse_deviation(k); }));
  d.v = one_plus(interpolate(grid, st, [&](std::size_t k) { return v.deviation(k); }));
  d.v_r = synthesize(interpolate(grid, st, [&](std::size_t k) { return v.radial_coeffs(k); }));
  return d;
}

SliceIntegrals slice_integrals(const QuasiSphericalMetric& g, const PotentialField& v, double r) {
  const SliceData d = slice_data(g, v, r);
  const int n = g.dim();
  const GridPtr& grid = g.grid();
  const Eigen::VectorXd& wq = grid->weights();
  const double scale = std::pow(r, n - 1);
  const Eigen::ArrayXd u = d.u.v.array();
  const Eigen::ArrayXd vv = d.v.v.array();
  if ((u <= 0.0).any()) throw Error(ErrorCode::kNonPositiveLapse, "lapse not positive on slice");
  const Eigen::ArrayXd h = double(n - 1) / (r * u);

  SliceIntegrals s;
  s.r = r;
  s.unit_area = grid->measure();
  s.area = s.unit_area * scale;
  s.int_h = scale * wq.dot(h.matrix());
  s.int_vh = scale * wq.dot((vv * h).matrix());
  s.int_dv_dnu = scale * wq.dot((d.v_r.v.array() / u).matrix());
  s.v_min = vv.minCoeff();
  s.v_spread = vv.maxCoeff() - s.v_min;
  if (s.v_min > 0.0) {
    const double p = 2.0 * double(n - 1) / double(n - 2);
    s.int_v_conformal = scale * wq.dot(vv.pow(p).matrix());
  } else {
    s.int_v_conformal = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

double smarr_mass(const QuasiSphericalMetric& g, const PotentialField& v, double r) {
  return slice_mass(slice_integrals(g, v, r), g.dim());
}

double minkowski_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r,
                     std::optional<double> mass) {
  const int n = g.dim();
  const SliceIntegrals s = slice_integrals(g, v, r);
  const double m = mass ? *mass : slice_mass(s, n);
  return s.int_vh / (double(n - 1) * s.unit_area) + 2.0 * m -
         std::pow(s.area / s.unit_area, power_mean_exponent(n));
}

double q_functional(const QuasiSphericalMetric& g, const PotentialField& v, double r,
                    std::optional<double> mass) {
  const int n = g.dim();
  const SliceIntegrals s = slice_integrals(g, v, r);
  const double m = mass ? *mass : slice_mass(s, n);
  return std::pow(s.area, -power_mean_exponent(n)) *
         (s.int_vh + 2.0 * double(n - 1) * s.unit_area * m);
}

double equipotential_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r) {
  const int n = g.dim();
  const SliceIntegrals s = slice_integrals(g, v, r);
  if (s.v_spread > kEquipotentialTolerance) {
    throw Error(ErrorCode::kNotEquipotential,
                "potential varies by " + std::to_string(s.v_spread) + " on the slice");
  }
  const double v0 = s.v_min + 0.5 * s.v_spread;
  return std::pow(s.area / s.unit_area, -power_mean_exponent(n)) * s.int_h /
             (double(n - 1) * s.unit_area) -
         v0;
}

ConformalPair conformal_pair(const QuasiSphericalMetric& g, const PotentialField& v) {
  require_compatible(g, v);
  ConformalPair p{g, {}, {}};
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    p.factor.push_back(AngularField::constant(g.grid(), 1.0));
    p.potential.push_back(v.value(k));
  }
  return p;
}

ConformalPair conformal_transform(const ConformalPair& pair) {
  const int n = pair.base.dim();
  const double e = 4.0 / double(n - 2);
  ConformalPair out{pair.base, pair.factor, pair.potential};
  for (std::size_t k = 0; k < pair.potential.size(); ++k) {
    const Eigen::ArrayXd vv = pair.potential[k].v.array();
    if ((vv <= 0.0).any()) {
      throw Error(ErrorCode::kNonPositivePotential,
                  "potential not positive at r = " + std::to_string(pair.base.radius(k)));
    }
    out.factor[k].v = (pair.factor[k].v.array() * vv.pow(e)).matrix();
    out.potential[k].v = vv.inverse().matrix();
  }
  return out;
}

double conformal_area(const ConformalPair& pair, std::size_t k) {
  const int n = pair.base.dim();
  if (k >= pair.factor.size()) throw Error(ErrorCode::kStationOutOfRange, "station index");
  const GridPtr& grid = pair.base.grid();
  const double r = pair.base.radius(k);
  const Eigen::ArrayXd f = pair.factor[k].v.array().pow(0.5 * double(n - 1));
  return std::pow(r, n - 1) * grid->weights().dot(f.matrix());
}

double conformal_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r) {
  const int n = g.dim();
  const SliceIntegrals s = slice_integrals(g, v, r);
  if (!(s.v_min > 0.0)) {
    throw Error(ErrorCode::kNonPositivePotential, "potential not positive on the slice");
  }
  return s.int_vh / (double(n - 1) * s.unit_area) -
         std::pow(s.int_v_conformal / s.unit_area, power_mean_exponent(n));
}

double einstein_hilbert_round(const GridPtr& grid, double r) {
  if (!(r > 0.0)) throw Error(ErrorCode::kInvalidArgument, "radius must be positive");
  const int n = grid->dim();
  const double area = grid->measure() * std::pow(r, n - 1);
  const Eigen::VectorXd curvature =
      Eigen::VectorXd::Constant(Eigen::Index(grid->num_nodes()), double((n - 1) * (n - 2)) / (r * r));
  const double integral = std::pow(r, n - 1) * grid->weights().dot(curvature);
  return std::pow(area, double(3 - n) / double(n - 1)) * integral;
}

std::vector<double> station_times(const QuasiSphericalMetric& g, double t_max) {
  const double n1 = double(g.dim() - 1);
  const double r0 = g.radius(0);
  std::vector<double> t;
  for (double r : g.radii()) {
    const double tk = r == r0 ? 0.0 : n1 * std::log(r / r0);
    if (tk > t_max * (1.0 + 1e-12)) break;
    t.push_back(tk);
  }
  return t;
}

FlowTrace q_trace(const QuasiSphericalMetric& g, const PotentialField& v,
                  const QTraceOptions& options) {
  require_compatible(g, v);
  const int n = g.dim();
  std::vector<double> times = options.times;
  if (times.empty()) {
    if (!(options.t_max > 0.0)) throw Error(ErrorCode::kInvalidArgument, "t_max must be positive");
    for (std::size_t i = 0; i < options.samples; ++i) {
      times.push_back(options.t_max * double(i) / double(std::max<std::size_t>(options.samples, 2) - 1));
    }
  }
  if (times.size() < 3) throw Error(ErrorCode::kInvalidArgument, "q_trace needs 3 samples");
  if (times.front() != 0.0 || !std::is_sorted(times.begin(), times.end()) ||
      std::adjacent_find(times.begin(), times.end()) != times.end()) {
    throw Error(ErrorCode::kInvalidArgument, "sample times must increase from 0");
  }

  FlowTrace trace;
  trace.n = n;
  trace.is_imcf = g.asymmetry() <= kSymmetryTolerance;
  if (!trace.is_imcf && !options.diagnostic) {
    throw Error(ErrorCode::kNotSymmetric,
                "coordinate spheres of a non-symmetric metric do not move by IMCF");
  }
  trace.m = smarr_mass(g, v, g.radii().back());
  const double r0 = options.r0 ? *options.r0 : g.radii().front();
  const GridPtr& grid = g.grid();
  const double expo = power_mean_exponent(n);

  for (double t : times) {
    FlowSample fs;
    fs.t = t;
    fs.r = imcf_radius(fs.t, r0, n);
    const SliceData d = slice_data(g, v, fs.r);
    const SliceIntegrals s = slice_integrals(g, v, fs.r);
    fs.area = s.area;
    fs.int_vh = s.int_vh;
    fs.q = std::pow(s.area, -expo) * (s.int_vh + 2.0 * double(n - 1) * s.unit_area * trace.m);
    fs.gap = s.int_vh / (double(n - 1) * s.unit_area) + 2.0 * trace.m -
             std::pow(s.area / s.unit_area, expo);

    // h_ab = (r/u) sigma_ab and gamma_ab = r^2 sigma_ab; traceless part per sigma.
    const Eigen::ArrayXd u = d.u.v.array();
    const Eigen::ArrayXd mean = double(n - 1) / (fs.r * u);
    const Eigen::ArrayXd traceless = fs.r / u - mean / double(n - 1) * fs.r * fs.r;
    const Eigen::ArrayXd norm2 = double(n - 1) * (traceless / (fs.r * fs.r)).square();
    const double scale = std::pow(fs.r, n - 1);
    fs.umbilic_term =
        -std::pow(s.area, -expo) * scale * grid->weights().dot((d.v.v.array() / mean * norm2).matrix());
    trace.samples.push_back(fs);
  }

  auto& sm = trace.samples;
  const std::vector<Stencil> st = derivative_stencils(times, 1, 3);
  for (std::size_t i = 0; i < sm.size(); ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < st[i].weights.size(); ++j) d += st[i].weights[j] * sm[st[i].start + j].q;
    sm[i].dq_dt = d;
  }
  trace.max_dq_dt = -std::numeric_limits<double>::infinity();
  for (const auto& fs : sm) trace.max_dq_dt = std::max(trace.max_dq_dt, fs.dq_dt);
  trace.monotone = trace.max_dq_dt <= options.monotone_tolerance;
  return trace;
}

}  // namespace qsm
