#include "qsm/asymptotics.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsm/error.hpp"

namespace qsm {

double PowerTerm::operator()(double r) const {
  double v = std::pow(r, power);
  for (int i = 0; i < log_power; ++i) v *= std::log(r);
  return v;
}

std::string PowerTerm::label() const {
  std::ostringstream os;
  os << "r^" << power;
  if (log_power == 1) os << " log r";
  if (log_power > 1) os << " log^" << log_power << " r";
  return os.str();
}

CurveFit fit_curves(const std::vector<double>& r, const Eigen::MatrixXd& y,
                    const std::vector<PowerTerm>& terms, double lead_power) {
  const auto rows = static_cast<Eigen::Index>(r.size());
  const auto cols = static_cast<Eigen::Index>(terms.size());
  if (y.rows() != rows) throw Error(ErrorCode::kInvalidArgument, "data rows do not match radii");
  if (rows < cols + 2) {
    throw Error(ErrorCode::kWindowTooSmall,
                "fit needs at least " + std::to_string(cols + 2) + " stations, got " +
                    std::to_string(rows));
  }
  Eigen::MatrixXd a(rows, cols);
  Eigen::MatrixXd b(rows, y.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double wt = std::pow(r[i], -lead_power);
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = wt * terms[j](r[i]);
    b.row(i) = wt * y.row(i);
  }
  Eigen::VectorXd scale(cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    scale(j) = a.col(j).norm();
    if (!(scale(j) > 0.0)) throw Error(ErrorCode::kRankDeficient, "zero basis column");
    a.col(j) /= scale(j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::VectorXd sv = svd.singularValues();
  CurveFit out;
  out.terms = terms;
  out.rows = r.size();
  out.condition = sv(0) / sv(sv.size() - 1);
  if (!(out.condition < 1e13)) {
    throw Error(ErrorCode::kRankDeficient,
                "basis is numerically dependent over the window (condition " +
                    std::to_string(out.condition) + ")");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd x = qr.solve(b);
  const Eigen::MatrixXd res = a * x - b;
  for (Eigen::Index j = 0; j < cols; ++j) x.row(j) /= scale(j);
  out.coeffs = x;
  out.residual.resize(y.cols());
  out.amplitude.resize(y.cols());
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    out.amplitude(k) = b.col(k).norm();
    out.residual(k) = out.amplitude(k) > 0.0 ? res.col(k).norm() / out.amplitude(k) : 0.0;
  }
  return out;
}

std::vector<PowerTerm> expansion_basis(int n, int degree) {
  if (n < kMinDimension || n > kMaxDimension) {
    throw Error(ErrorCode::kUnsupportedDimension, "dimension outside [3, 8]");
  }
  if (n == 3) {
    switch (degree) {
      case 0:
        return {{-1, 0}, {-2, 0}, {-3, 0}, {-4, 1}, {-4, 0}, {-5, 1}, {-5, 0}};
      case 1:
        return {{-2, 0}, {-3, 0}, {-4, 1}, {-4, 0}, {-5, 1}, {-5, 0}};
      case 2:
        return {{-4, 1}, {-4, 0}, {-5, 1}, {-5, 0}};
      default:
        return {{-5, 1}};
    }
  }
  const double nn = n;
  const double p = nn + 2.0 / (nn - 1.0);
  std::vector<PowerTerm> t;
  auto add = [&](double power) {
    for (const auto& x : t) {
      if (std::abs(x.power - power) < 1e-9) return;
    }
    t.push_back({power, 0});
  };
  switch (degree) {
    case 0:
      add(2 - nn);
      add(4 - 2 * nn);
      add(2 - 2 * nn);
      add(6 - 3 * nn);
      break;
    case 1:
      add(1 - nn);
      add(3 - 2 * nn);
      break;
    case 2:
      add(-p);
      add(2 - 2 * nn);
      add(2 - nn - p);
      add(4 - 3 * nn);
      break;
    default:
      add(3 - 3 * nn);
      break;
  }
  return t;
}

namespace {

int term_index(const std::vector<PowerTerm>& terms, double power, int log_power) {
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (std::abs(terms[j].power - power) < 1e-9 && terms[j].log_power == log_power) {
      return static_cast<int>(j);
    }
  }
  return -1;
}

}  // namespace

ExpansionReport fit_expansion(const std::vector<double>& radii,
                              const std::vector<ModeCoeffs>& deviation, FitWindow window,
                              const FitOptions& options) {
  if (radii.size() != deviation.size() || radii.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "radii and coefficient stacks differ in length");
  }
  const GridPtr grid = deviation.front().grid;
  const int n = grid->dim();
  if (!(window.r_max > window.r_min)) {
    throw Error(ErrorCode::kInvalidArgument, "fit window must satisfy r_min < r_max");
  }
  const double near = options.near_field_factor * radii.front();
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (radii[k] >= window.r_min && radii[k] <= window.r_max && radii[k] >= near) idx.push_back(k);
  }
  if (idx.size() < options.min_stations) {
    std::ostringstream msg;
    msg << "fit window holds " << idx.size() << " stations beyond r=" << near << ", need "
        << options.min_stations;
    throw Error(ErrorCode::kWindowTooSmall, msg.str());
  }
  std::vector<double> r;
  for (auto k : idx) r.push_back(radii[k]);

  ExpansionReport rep;
  rep.n = n;
  rep.window = window;
  rep.stations = idx.size();
  rep.dot = ModeCoeffs::zeros(grid);
  rep.ddot = ModeCoeffs::zeros(grid);
  rep.hat = ModeCoeffs::zeros(grid);
  rep.triple = ModeCoeffs::zeros(grid);
  const double root_area = std::sqrt(unit_sphere_area(n - 1));
  const double nn = n;
  const double p = nn + 2.0 / (nn - 1.0);

  for (int l = 0; l <= grid->lmax(); ++l) {
    DegreeFit df;
    df.degree = l;
    for (std::size_t j = 0; j < grid->num_modes(); ++j) {
      if (grid->degree(j) == l) df.modes.push_back(j);
    }
    if (df.modes.empty()) continue;
    Eigen::MatrixXd y(r.size(), df.modes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t q = 0; q < df.modes.size(); ++q) y(i, q) = deviation[idx[i]].c(df.modes[q]);
    }
    const std::vector<PowerTerm> terms = expansion_basis(n, l);
    df.fit = fit_curves(r, y, terms, terms.front().power);
    rep.max_condition = std::max(rep.max_condition, df.fit.condition);
    if (l <= 2) {
      const double amp = df.fit.amplitude.norm();
      const double res = df.fit.residual.cwiseProduct(df.fit.amplitude).norm();
      if (amp > 0.0) rep.max_residual = std::max(rep.max_residual, res / amp);
    }

    auto take = [&](ModeCoeffs& dst, double power, int log_power) {
      const int t = term_index(terms, power, log_power);
      if (t < 0) return;
      for (std::size_t q = 0; q < df.modes.size(); ++q) dst.c(df.modes[q]) = df.fit.coeffs(t, q);
    };
    if (l == 0) {
      rep.leading = df.fit.coeffs(0, 0) / root_area;
      rep.quadratic = df.fit.coeffs(term_index(terms, 4 - 2 * nn, 0), 0) / root_area;
    }
    if (n == 3) {
      if (l == 1) take(rep.dot, -2, 0);
      if (l <= 1) take(rep.ddot, -3, 0);
      if (l <= 2) {
        take(rep.hat, -4, 1);
        take(rep.triple, -4, 0);
      }
    } else {
      if (l == 1) take(rep.dot, 1 - nn, 0);
      if (l == 2) {
        take(rep.hat, -p, 0);
        take(rep.triple, 2 - 2 * nn, 0);
      }
    }
    if (l >= 3) {
      rep.higher_mode_bound = std::max(rep.higher_mode_bound, df.fit.coeffs.row(0).cwiseAbs().maxCoeff());
    }
    rep.fits.push_back(std::move(df));
  }
  return rep;
}

ExpansionReport fit_expansion_3d(const QuasiSphericalMetric& g, FitWindow window,
                                 const FitOptions& options) {
  if (g.dim() != 3) throw Error(ErrorCode::kUnsupportedDimension, "three-dimensional fit needs n = 3");
  std::vector<ModeCoeffs> dev;
  for (std::size_t k = 0; k < g.num_stations(); ++k) dev.push_back(g.lapse_deviation(k));
  return fit_expansion(g.radii(), dev, window, options);
}

ExpansionReport fit_expansion_highdim(const QuasiSphericalMetric& g, FitWindow window,
                                      const FitOptions& options) {
  if (g.dim() < 4) throw Error(ErrorCode::kUnsupportedDimension, "high-dimensional fit needs n >= 4");
  std::vector<ModeCoeffs> dev;
  for (std::size_t k = 0; k < g.num_stations(); ++k) dev.push_back(g.lapse_deviation(k));
  return fit_expansion(g.radii(), dev, window, options);
}

ModeCoeffs square_l2(const ModeCoeffs& a) {
  const SphereGrid& g = *a.grid;
  const Eigen::ArrayXd v = g.synthesize(a.c, Component::kValue).array();
  const Eigen::VectorXd sq = (v * v).matrix();
  return project(ModeCoeffs{a.grid, g.analyze(sq, Component::kValue)}, {ModeSelect::kEqual, 2});
}

double forced_l2_factor(int n) {
  if (n < 4) throw Error(ErrorCode::kUnsupportedDimension, "forced l = 2 factor needs n >= 4");
  const double nn = n;
  return (1.5 * (nn - 1) * (nn - 2) + 2 * (nn - 1)) / (nn * (nn - 3));
}

L2RelationReport check_l2_relation(const ExpansionReport& rep) {
  L2RelationReport out;
  out.factor = rep.n == 3 ? -3.5 : forced_l2_factor(rep.n);
  const ModeCoeffs sq = square_l2(rep.dot);
  out.predicted = out.factor * sq;
  out.measured = project(rep.n == 3 ? rep.hat : rep.triple, {ModeSelect::kEqual, 2});
  out.gap = (out.measured.c - out.predicted.c).norm();
  const double d2 = rep.dot.c.squaredNorm();
  out.relative_to_udot = d2 > 0.0 ? out.gap / d2 : 0.0;
  const double pn = out.predicted.c.norm();
  out.relative_to_prediction = pn > 0.0 ? out.gap / pn : 0.0;
  return out;
}

double loglog_slope(const std::vector<double>& r, const std::vector<double>& y) {
  if (r.size() != y.size() || r.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "slope needs matching samples, at least two");
  }
  Eigen::MatrixXd a(r.size(), 2);
  Eigen::VectorXd b(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(std::abs(y[i]) > 0.0)) throw Error(ErrorCode::kInvalidArgument, "slope needs nonzero samples");
    a(i, 0) = 1.0;
    a(i, 1) = std::log(r[i]);
    b(i) = std::log(std::abs(y[i]));
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  return x(1);
}

std::vector<double> mode_history(const QuasiSphericalMetric& g, std::size_t mode) {
  if (mode >= g.grid()->num_modes()) throw Error(ErrorCode::kInvalidArgument, "mode index out of range");
  std::vector<double> out;
  for (std::size_t k = 0; k < g.num_stations(); ++k) out.push_back(g.lapse_deviation(k).c(mode));
  return out;
}

ExponentReport measure_exponents(const QuasiSphericalMetric& g, const ExpansionReport& rep) {
  const int n = g.dim();
  if (n < 4) throw Error(ErrorCode::kUnsupportedDimension, "exponent audit needs n >= 4");
  const GridPtr& grid = g.grid();
  const std::size_t i1 = grid->index(1);
  const std::size_t i2 = grid->index(2);
  const double p = n + 2.0 / (n - 1.0);
  std::vector<double> r, a1, a2, rem;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    const double rk = g.radius(k);
    if (rk < rep.window.r_min || rk > rep.window.r_max) continue;
    if (rk < g.radius(0) * FitOptions{}.near_field_factor) continue;
    const Eigen::VectorXd& c = g.lapse_deviation(k).c;
    r.push_back(rk);
    a1.push_back(c(i1));
    a2.push_back(c(i2));
    rem.push_back(c(i2) - rep.hat.c(i2) * std::pow(rk, -p));
  }
  if (r.size() < 2) throw Error(ErrorCode::kWindowTooSmall, "exponent audit window is empty");
  ExponentReport out;
  out.expected_l1 = 1.0 - n;
  out.expected_l2_free = -p;
  out.expected_l2_forced = 2.0 - 2.0 * n;
  out.slope_l1 = loglog_slope(r, a1);
  out.slope_l2_free = loglog_slope(r, a2);
  out.slope_l2_forced = loglog_slope(r, rem);
  return out;
}

}  // namespace qsm
