#include "qsm/metric.hpp"

#include <cmath>
#include <string>

#include "qsm/error.hpp"
#include "qsm/radial.hpp"

namespace qsm {

namespace {

void check_radii(const std::vector<double>& radii) {
  if (radii.empty()) throw Error(ErrorCode::kInvalidArgument, "empty radial grid");
  if (!(radii.front() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "r0 must be positive");
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (!(radii[i] > radii[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "radii must be strictly increasing");
    }
  }
}

void check_stack(const GridPtr& grid, std::size_t count, const std::vector<ModeCoeffs>& f,
                 const char* what) {
  if (f.size() != count) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + ": expected one coefficient set per station");
  }
  for (const ModeCoeffs& c : f) require_same_grid(grid, c.grid);
}

std::vector<ModeCoeffs> analyze_all(const std::vector<AngularField>& f) {
  std::vector<ModeCoeffs> out;
  out.reserve(f.size());
  for (const AngularField& x : f) out.push_back(analyze(x));
  return out;
}

std::vector<ModeCoeffs> analyze_deviation(const std::vector<AngularField>& f) {
  std::vector<ModeCoeffs> out;
  out.reserve(f.size());
  for (const AngularField& x : f) {
    out.push_back(analyze(AngularField{x.grid, x.v.array() - 1.0}));
  }
  return out;
}

}  // namespace

std::vector<ModeCoeffs> radial_derivative(const std::vector<double>& radii,
                                          const std::vector<ModeCoeffs>& f, int width) {
  if (radii.size() < 3) {
    throw Error(ErrorCode::kTooFewStations, "radial differencing needs at least 3 stations");
  }
  std::vector<Stencil> st = derivative_stencils(log_of(radii), 1, width);
  std::vector<ModeCoeffs> out;
  out.reserve(radii.size());
  for (std::size_t k = 0; k < radii.size(); ++k) {
    ModeCoeffs d = ModeCoeffs::zeros(f[k].grid);
    for (std::size_t i = 0; i < st[k].weights.size(); ++i) {
      d.c += st[k].weights[i] * f[st[k].start + i].c;
    }
    d.c /= radii[k];
    out.push_back(std::move(d));
  }
  return out;
}

RadialFieldStack::RadialFieldStack(GridPtr grid, std::vector<double> radii,
                                   std::vector<ModeCoeffs> deviation,
                                   std::vector<ModeCoeffs> first,
                                   std::vector<ModeCoeffs> second)
    : grid_(std::move(grid)), radii_(std::move(radii)), dev_(std::move(deviation)) {
  check_radii(radii_);
  check_stack(grid_, radii_.size(), dev_, "deviation");
  if (!first.empty()) {
    check_stack(grid_, radii_.size(), first, "first derivative");
    stored_first_ = true;
    d1_ = std::move(first);
  }
  if (!second.empty()) {
    check_stack(grid_, radii_.size(), second, "second derivative");
    stored_second_ = true;
    d2_ = std::move(second);
  }
  val_.reserve(dev_.size());
  for (const ModeCoeffs& c : dev_) {
    AngularField f = synthesize(c);
    f.v.array() += 1.0;
    val_.push_back(std::move(f));
  }
}

double RadialFieldStack::radius(std::size_t k) const {
  check_station(k);
  return radii_[k];
}

void RadialFieldStack::check_station(std::size_t k) const {
  if (k >= radii_.size()) {
    throw Error(ErrorCode::kStationOutOfRange,
                "station " + std::to_string(k) + " outside [0, " + std::to_string(radii_.size()) +
                    ")");
  }
}

void RadialFieldStack::ensure_differenced(std::size_t order) const {
  if (d1_.empty()) d1_ = radial_derivative(radii_, dev_);
  if (order >= 2 && d2_.empty()) {
    if (stored_first_) {
      d2_ = radial_derivative(radii_, d1_);
    } else {
      // f_rr = (f_ss - f_s) / r^2 with 5-point stencils in s.
      std::vector<double> s = log_of(radii_);
      std::vector<Stencil> st1 = derivative_stencils(s, 1, 5);
      std::vector<Stencil> st2 = derivative_stencils(s, 2, 5);
      d2_.reserve(radii_.size());
      for (std::size_t k = 0; k < radii_.size(); ++k) {
        ModeCoeffs d = ModeCoeffs::zeros(grid_);
        for (std::size_t i = 0; i < st2[k].weights.size(); ++i) {
          d.c += st2[k].weights[i] * dev_[st2[k].start + i].c;
        }
        for (std::size_t i = 0; i < st1[k].weights.size(); ++i) {
          d.c -= st1[k].weights[i] * dev_[st1[k].start + i].c;
        }
        d.c /= radii_[k] * radii_[k];
        d2_.push_back(std::move(d));
      }
    }
  }
}

const ModeCoeffs& RadialFieldStack::deviation(std::size_t k) const {
  check_station(k);
  return dev_[k];
}

const AngularField& RadialFieldStack::value(std::size_t k) const {
  check_station(k);
  return val_[k];
}

const ModeCoeffs& RadialFieldStack::first_coeffs(std::size_t k) const {
  check_station(k);
  ensure_differenced(1);
  return d1_[k];
}

const AngularField& RadialFieldStack::first(std::size_t k) const {
  check_station(k);
  ensure_differenced(1);
  if (d1v_.empty()) {
    for (const ModeCoeffs& c : d1_) d1v_.push_back(synthesize(c));
  }
  return d1v_[k];
}

const ModeCoeffs& RadialFieldStack::second_coeffs(std::size_t k) const {
  check_station(k);
  ensure_differenced(2);
  return d2_[k];
}

const AngularField& RadialFieldStack::second(std::size_t k) const {
  check_station(k);
  ensure_differenced(2);
  if (d2v_.empty()) {
    for (const ModeCoeffs& c : d2_) d2v_.push_back(synthesize(c));
  }
  return d2v_[k];
}

QuasiSphericalMetric::QuasiSphericalMetric(GridPtr grid, std::vector<double> radii,
                                           std::vector<ModeCoeffs> lapse_deviation,
                                           std::vector<ModeCoeffs> lapse_r)
    : stack_(std::move(grid), std::move(radii), std::move(lapse_deviation), std::move(lapse_r)) {
  for (std::size_t k = 0; k < stack_.num_stations(); ++k) {
    const double umin = stack_.value(k).v.minCoeff();
    if (!(umin > 0.0)) {
      throw Error(ErrorCode::kNonPositiveLapse,
                  "lapse not positive at station " + std::to_string(k) + " (min " +
                      std::to_string(umin) + ")");
    }
  }
}

QuasiSphericalMetric QuasiSphericalMetric::from_nodal(GridPtr grid, std::vector<double> radii,
                                                      const std::vector<AngularField>& lapse,
                                                      const std::vector<AngularField>& lapse_r) {
  return QuasiSphericalMetric(std::move(grid), std::move(radii), analyze_deviation(lapse),
                              analyze_all(lapse_r));
}

double QuasiSphericalMetric::asymmetry() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < num_stations(); ++k) {
    worst = std::max(worst, coeff_norm(project(lapse_deviation(k), {ModeSelect::kAtLeast, 1})));
  }
  return worst;
}

PotentialField::PotentialField(GridPtr grid, std::vector<double> radii,
                               std::vector<ModeCoeffs> deviation, std::vector<ModeCoeffs> v_r,
                               std::vector<ModeCoeffs> v_rr, PotentialMetadata meta)
    : stack_(std::move(grid), std::move(radii), std::move(deviation), std::move(v_r),
             std::move(v_rr)),
      meta_(std::move(meta)) {}

PotentialField PotentialField::from_nodal(GridPtr grid, std::vector<double> radii,
                                          const std::vector<AngularField>& v,
                                          const std::vector<AngularField>& v_r,
                                          const std::vector<AngularField>& v_rr,
                                          PotentialMetadata meta) {
  return PotentialField(std::move(grid), std::move(radii), analyze_deviation(v),
                        analyze_all(v_r), analyze_all(v_rr), std::move(meta));
}

void require_compatible(const QuasiSphericalMetric& g, const PotentialField& v) {
  require_same_grid(g.grid(), v.grid());
  if (g.radii() != v.radii()) {
    throw Error(ErrorCode::kGridMismatch, "metric and potential use different radial grids");
  }
}

double schwarzschild_lapse(int n, double m, double r) {
  return 1.0 / std::sqrt(1.0 - 2.0 * m * std::pow(r, 2 - n));
}

double schwarzschild_lapse_r(int n, double m, double r) {
  const double u = schwarzschild_lapse(n, m, r);
  return -m * (n - 2) * std::pow(r, 1 - n) * u * u * u;
}

StaticPair schwarzschild(const GridPtr& grid, double m, const std::vector<double>& radii) {
  check_radii(radii);
  const int n = grid->dim();
  if (!(std::pow(radii.front(), n - 2) > 2.0 * m)) {
    throw Error(ErrorCode::kHorizonViolation,
                "r0^(n-2) = " + std::to_string(std::pow(radii.front(), n - 2)) +
                    " does not exceed 2m = " + std::to_string(2.0 * m));
  }
  const double y00 = std::sqrt(grid->measure());
  std::vector<ModeCoeffs> ud, ur, vd, vr, vrr;
  for (double r : radii) {
    const double a = 2.0 * m * std::pow(r, 2 - n);
    const double u = 1.0 / std::sqrt(1.0 - a);
    // 1/sqrt(1-a) - 1 and sqrt(1-a) - 1 without cancellation.
    const double udev = a / (std::sqrt(1.0 - a) * (1.0 + std::sqrt(1.0 - a)));
    const double vdev = -a / (1.0 + std::sqrt(1.0 - a));
    const double u_r = -m * (n - 2) * std::pow(r, 1 - n) * u * u * u;
    const double v_r = m * (n - 2) * std::pow(r, 1 - n) * u;
    const double v_rr = m * (n - 2) * ((1 - n) * std::pow(r, -n) * u + std::pow(r, 1 - n) * u_r);
    auto mono = [&](double value) {
      ModeCoeffs c = ModeCoeffs::zeros(grid);
      c.c[0] = value * y00;
      return c;
    };
    ud.push_back(mono(udev));
    ur.push_back(mono(u_r));
    vd.push_back(mono(vdev));
    vr.push_back(mono(v_r));
    vrr.push_back(mono(v_rr));
  }
  PotentialMetadata meta;
  meta.inner_condition = "closed-form";
  meta.outer_closure = "closed-form";
  meta.outer_radius = radii.back();
  return StaticPair{QuasiSphericalMetric(grid, radii, std::move(ud), std::move(ur)),
                    PotentialField(grid, radii, std::move(vd), std::move(vr), std::move(vrr),
                                   meta)};
}

AngularField scalar_residual(const QuasiSphericalMetric& g, std::size_t k) {
  const int n = g.dim();
  const double r = g.radius(k);
  const double c = 0.5 * (n - 1) * (n - 2);
  const Eigen::ArrayXd u = g.lapse(k).v.array();
  const Eigen::ArrayXd lap = synthesize(laplace_beltrami(g.lapse_deviation(k))).v.array();
  const Eigen::ArrayXd ur = g.lapse_r(k).v.array();
  // u - u^3 = -u (u - 1)(u + 1) keeps accuracy near u = 1.
  const Eigen::ArrayXd w = g.lapse(k).v.array() - 1.0;
  Eigen::ArrayXd res = u * u * lap - (n - 1) * r * ur - c * u * w * (u + 1.0);
  return AngularField{g.grid(), res.matrix()};
}

std::vector<AngularField> scalar_residual(const QuasiSphericalMetric& g) {
  std::vector<AngularField> out;
  out.reserve(g.num_stations());
  for (std::size_t k = 0; k < g.num_stations(); ++k) out.push_back(scalar_residual(g, k));
  return out;
}

CurvatureEntry ricci_components(const QuasiSphericalMetric& g, std::size_t k) {
  const int n = g.dim();
  const double r = g.radius(k);
  const GridPtr& grid = g.grid();
  const Eigen::ArrayXd u = g.lapse(k).v.array();
  const Eigen::ArrayXd ur = g.lapse_r(k).v.array();
  const Eigen::ArrayXd uinv = u.inverse();
  const ModeCoeffs& dev = g.lapse_deviation(k);
  const Eigen::ArrayXd lap = synthesize(laplace_beltrami(dev)).v.array();
  SymTensorField hess = covariant_hessian(dev);
  TangentField grad = gradient(dev);

  CurvatureEntry e;
  e.radius = r;
  const Eigen::ArrayXd diag = r * uinv.cube() * ur + (n - 2) * (1.0 - uinv.square());
  e.ric_ab.grid = grid;
  e.ric_ab.pp = (-uinv * hess.pp.array() + diag).matrix();
  e.ric_ab.pa = (-uinv * hess.pa.array()).matrix();
  e.ric_ab.aa = (-uinv * hess.aa.array() + diag).matrix();
  const Eigen::ArrayXd f = (n - 2) / r * uinv.square();
  e.ric_a_nu = TangentField{grid, (f * grad.polar.array()).matrix(),
                            (f * grad.azimuthal.array()).matrix()};
  e.ric_nu_nu = AngularField{
      grid, (-uinv * lap / (r * r) + (n - 1) / r * uinv.cube() * ur).matrix()};
  e.scalar = AngularField{grid, e.ric_ab.trace().v / (r * r) + e.ric_nu_nu.v};
  const Eigen::ArrayXd es = scalar_residual(g, k).v.array();
  e.scalar_from_lapse = AngularField{grid, (-2.0 * es * uinv.cube() / (r * r)).matrix()};

  auto tensor_sup = [&](const SymTensorField& t) {
    const double kk = n == 3 ? 1.0 : double(n - 2);
    Eigen::ArrayXd sq = t.pp.array().square() + 2.0 * t.pa.array().square() +
                        kk * t.aa.array().square();
    return std::sqrt(sq.maxCoeff());
  };
  e.sup_ab = tensor_sup(e.ric_ab);
  e.l2_ab = l2_norm(e.ric_ab);
  e.sup_a_nu = std::sqrt(gradient_inner(e.ric_a_nu, e.ric_a_nu).v.maxCoeff());
  e.l2_a_nu = l2_norm(e.ric_a_nu);
  e.sup_nu_nu = sup_norm(e.ric_nu_nu);
  e.l2_nu_nu = l2_norm(e.ric_nu_nu);
  e.sup_scalar = sup_norm(e.scalar);
  e.l2_scalar = l2_norm(e.scalar);
  return e;
}

CurvatureReport curvature_report(const QuasiSphericalMetric& g) {
  CurvatureReport rep;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    rep.stations.push_back(ricci_components(g, k));
    const CurvatureEntry& e = rep.stations.back();
    rep.max_trace_mismatch =
        std::max(rep.max_trace_mismatch, sup_norm(e.scalar - e.scalar_from_lapse));
  }
  return rep;
}

SphereGeometry sphere_geometry(const QuasiSphericalMetric& g, std::size_t k) {
  const int n = g.dim();
  const double r = g.radius(k);
  SphereGeometry geo;
  geo.mean_curvature =
      AngularField{g.grid(), ((n - 1) / r * g.lapse(k).v.array().inverse()).matrix()};
  geo.area = g.grid()->measure() * std::pow(r, n - 1);
  geo.umbilic = true;
  return geo;
}

}  // namespace qsm
