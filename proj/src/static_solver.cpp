#include "qsm/static_solver.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsm/error.hpp"
#include "qsm/evolve.hpp"
#include "qsm/radial.hpp"

namespace qsm {

namespace {

double scalar_flat_c(int n) { return 0.5 * (n - 1) * (n - 2); }

Eigen::VectorXd unit_constant(const GridPtr& grid) {
  return analyze(AngularField::constant(grid, 1.0)).c;
}

double spherical_mean(const AngularField& f) { return integrate(f) / f.grid->measure(); }

// u - 1 at the nodes, synthesized from the stored deviation so that parts
// below the resolution of 1 + (u - 1) survive.
Eigen::ArrayXd nodal_deviation(const ModeCoeffs& dev) {
  return dev.grid->synthesize(dev.c, Component::kValue).array();
}

struct Background {
  double r = 0.0;
  Eigen::ArrayXd u, u_r, dev;
  TangentField grad_u;
  SymTensorField hess_u;
};

Background background(const QuasiSphericalMetric& g, std::size_t k) {
  Background b;
  b.r = g.radius(k);
  b.dev = nodal_deviation(g.lapse_deviation(k));
  b.u = 1.0 + b.dev;
  b.u_r = g.lapse_r(k).v.array();
  b.grad_u = gradient(g.lapse_deviation(k));
  b.hess_u = covariant_hessian(g.lapse_deviation(k));
  return b;
}

// Residual components for V = constant + W with V_r, V_rr given by coefficients.
StaticResidualStation station_residual(const Background& b, const ModeCoeffs& w,
                                       const ModeCoeffs& v_r, const ModeCoeffs& v_rr,
                                       double constant) {
  const GridPtr& grid = w.grid;
  const SphereGrid& sg = *grid;
  const int n = sg.dim();
  const double r = b.r;
  const double c = scalar_flat_c(n);
  const Eigen::ArrayXd v = sg.synthesize(w.c, Component::kValue).array() + constant;
  const Eigen::ArrayXd vr = sg.synthesize(v_r.c, Component::kValue).array();
  const Eigen::ArrayXd vrr = sg.synthesize(v_rr.c, Component::kValue).array();
  const TangentField gv = gradient(w);
  const TangentField gvr = gradient(v_r);
  const SymTensorField hv = covariant_hessian(w);
  const Eigen::ArrayXd lap = sg.synthesize(laplace_beltrami(w).c, Component::kValue).array();
  const Eigen::ArrayXd& u = b.u;
  const Eigen::ArrayXd inv = 1.0 / u;
  const Eigen::ArrayXd gg = gradient_inner(b.grad_u, gv).v.array();
  const Eigen::ArrayXd& dev = b.dev;
  const Eigen::ArrayXd one_minus_u2 = -dev * (2.0 + dev);
  const Eigen::ArrayXd one_minus_inv2 = dev * (2.0 + dev) * inv * inv;

  const Eigen::ArrayXd radial = vrr - inv * b.u_r * vr + (u / (r * r)) * gg;
  StaticResidualStation out;
  out.radius = r;
  out.rr = AngularField{grid, (radial - (c / (r * r)) * one_minus_u2 * v).matrix()};
  out.laplace = AngularField{
      grid, (inv * inv * radial + lap / (r * r) + ((n - 1) / r) * inv * inv * vr).matrix()};
  auto ra_part = [&](const Eigen::VectorXd& dvr, const Eigen::VectorXd& dv,
                     const Eigen::VectorXd& du) {
    return (dvr.array() - inv * du.array() * vr - dv.array() / r -
            ((n - 2) / r) * v * inv * du.array())
        .matrix()
        .eval();
  };
  out.ra = TangentField{grid, ra_part(gvr.polar, gv.polar, b.grad_u.polar),
                        ra_part(gvr.azimuthal, gv.azimuthal, b.grad_u.azimuthal)};
  const Eigen::ArrayXd sig =
      r * inv * inv * vr - v * (r * inv * inv * inv * b.u_r + (n - 2) * one_minus_inv2);
  const Eigen::ArrayXd vu = v * inv;
  out.ab = SymTensorField{grid, (hv.pp.array() + vu * b.hess_u.pp.array() + sig).matrix(),
                          (hv.pa.array() + vu * b.hess_u.pa.array()).matrix(),
                          (hv.aa.array() + vu * b.hess_u.aa.array() + sig).matrix()};
  out.ab_trace = out.ab.trace();
  out.l2_rr = l2_norm(out.rr);
  out.sup_rr = sup_norm(out.rr);
  out.l2_ra = l2_norm(out.ra);
  out.l2_ab_trace = l2_norm(out.ab_trace);
  out.l2_ab_traceless = l2_norm(out.ab.traceless_norm());
  out.l2_laplace = l2_norm(out.laplace);
  out.sup_laplace = sup_norm(out.laplace);
  return out;
}

// Residual as one vector with scale-free weights: r^2 for rr and Laplace,
// r for ra, 1 for ab; nodes weighted by sqrt(quadrature weight * ds).
void stack_residual(const StaticResidualStation& st, double ds, Eigen::VectorXd* out) {
  const SphereGrid& g = *st.rr.grid;
  const int n = g.dim();
  const double r = st.radius;
  const double k = n == 3 ? 1.0 : double(n - 2);
  const std::size_t nn = g.num_nodes();
  const int blocks = n == 3 ? 8 : 5;
  out->resize(Eigen::Index(nn * blocks));
  const Eigen::ArrayXd sw = (g.weights().array() * ds).sqrt();
  Eigen::Index at = 0;
  auto put = [&](const Eigen::VectorXd& f, double scale) {
    out->segment(at, Eigen::Index(nn)) = (scale * sw * f.array()).matrix();
    at += Eigen::Index(nn);
  };
  put(st.rr.v, r * r);
  put(st.laplace.v, r * r);
  put(st.ra.polar, r);
  if (n == 3) put(st.ra.azimuthal, r);
  put(st.ab.pp, 1.0);
  put(st.ab.aa, std::sqrt(k));
  if (n == 3) put(st.ab.pa, std::sqrt(2.0));
  if (n == 3) {
    out->segment(at, Eigen::Index(nn)).setZero();
    at += Eigen::Index(nn);
  }
}

void check_window_stations(std::size_t n_stations, std::size_t skip_in, std::size_t skip_out) {
  if (n_stations < skip_in + skip_out + 2) {
    throw Error(ErrorCode::kWindowTooSmall, "probe window leaves fewer than two stations");
  }
}

void require_scalar_flat(const QuasiSphericalMetric& g, double tolerance) {
  const ResidualReport rep = residual_report(g);
  if (!(rep.max_sup <= tolerance)) {
    std::ostringstream msg;
    msg << "background is not scalar-flat: residual " << rep.max_sup << " at r="
        << rep.radii[rep.worst_station] << " exceeds " << tolerance;
    throw Error(ErrorCode::kNotScalarFlat, msg.str());
  }
}

// int_R^inf r^a (log r)^b dr for b in {0, 1}, a < -1.
double tail_integral(double a, int b, double big_r) {
  const double e = a + 1.0;
  const double base = std::pow(big_r, e);
  if (b == 0) return -base / e;
  return base * (-std::log(big_r) / e + 1.0 / (e * e));
}

// Leading terms of T = V_rr per degree: second derivatives of the expansion
// basis, as powers with optional log factor.
std::vector<PowerTerm> rr_tail_terms(int n, int degree, std::size_t count) {
  std::vector<PowerTerm> out;
  auto add = [&](PowerTerm t) {
    for (const PowerTerm& o : out) {
      if (std::abs(o.power - t.power) < 1e-12 && o.log_power == t.log_power) return;
    }
    if (out.size() < count) out.push_back(t);
  };
  for (const PowerTerm& t : expansion_basis(n, degree)) {
    add(PowerTerm{t.power - 2.0, t.log_power});
    if (t.log_power == 1) add(PowerTerm{t.power - 2.0, 0});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- residuals

StaticResidual static_residual(const QuasiSphericalMetric& g, const PotentialField& v,
                               FitWindow audit) {
  require_compatible(g, v);
  StaticResidual out;
  out.audit_window = audit;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    StaticResidualStation st = station_residual(background(g, k), v.deviation(k),
                                                v.radial_coeffs(k), v.radial2_coeffs(k), 1.0);
    const double r = g.radius(k);
    if (r >= audit.r_min && r <= audit.r_max) {
      out.max_rr = std::max(out.max_rr, st.l2_rr);
      out.max_ra = std::max(out.max_ra, st.l2_ra);
      out.max_ab_traceless = std::max(out.max_ab_traceless, st.l2_ab_traceless);
      out.max_ab_trace = std::max(out.max_ab_trace, st.l2_ab_trace);
      out.max_laplace = std::max(out.max_laplace, st.l2_laplace);
    }
    out.stations.push_back(std::move(st));
  }
  out.aggregate = std::max({out.max_rr, out.max_ra, out.max_ab_traceless, out.max_ab_trace,
                            out.max_laplace});
  return out;
}

// ------------------------------------------------------ symmetric potential

SymmetricPotential solve_potential_symmetric(const QuasiSphericalMetric& g,
                                             double substeps_per_interval) {
  if (g.asymmetry() > 1e-12) {
    throw Error(ErrorCode::kNotSymmetric, "lapse is not rotationally symmetric");
  }
  if (g.num_stations() < 2) throw Error(ErrorCode::kTooFewStations, "need at least two stations");
  if (!(substeps_per_interval >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "substeps per interval must be at least 1");
  }
  const int n = g.dim();
  const double c = scalar_flat_c(n);
  const std::size_t ns = g.num_stations();
  const std::vector<double> s = log_of(g.radii());
  std::vector<double> ubar(ns), ur(ns), alpha(ns), beta(ns);
  for (std::size_t k = 0; k < ns; ++k) {
    const double w =
        spherical_mean(AngularField{g.grid(), nodal_deviation(g.lapse_deviation(k)).matrix()});
    ubar[k] = 1.0 + w;
    ur[k] = spherical_mean(g.lapse_r(k));
    alpha[k] = g.radius(k) * ur[k] / ubar[k];
    beta[k] = -c * w * (2.0 + w);
  }
  const int width = int(std::min<std::size_t>(8, ns));
  // V_ss = (1 + r u_r / u) V_s + c (1 - u^2) V in s = log r.
  auto rhs = [&](double sv, double v, double p, double* dv, double* dp) {
    const double a = lagrange_interpolate(s, alpha, sv, width);
    const double b = lagrange_interpolate(s, beta, sv, width);
    *dv = p;
    *dp = (1.0 + a) * p + b * v;
  };
  std::vector<double> v(ns), p(ns);
  v[ns - 1] = 1.0 / ubar[ns - 1];
  p[ns - 1] = -g.radius(ns - 1) * ur[ns - 1] / (ubar[ns - 1] * ubar[ns - 1]);
  for (std::size_t k = ns - 1; k-- > 0;) {
    const int m = int(std::ceil(substeps_per_interval));
    const double h = (s[k] - s[k + 1]) / m;
    double x = s[k + 1], vv = v[k + 1], pp = p[k + 1];
    for (int i = 0; i < m; ++i) {
      double k1v, k1p, k2v, k2p, k3v, k3p, k4v, k4p;
      rhs(x, vv, pp, &k1v, &k1p);
      rhs(x + 0.5 * h, vv + 0.5 * h * k1v, pp + 0.5 * h * k1p, &k2v, &k2p);
      rhs(x + 0.5 * h, vv + 0.5 * h * k2v, pp + 0.5 * h * k2p, &k3v, &k3p);
      rhs(x + h, vv + h * k3v, pp + h * k3p, &k4v, &k4p);
      vv += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      pp += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
      x = (i + 1 == m) ? s[k] : x + h;
    }
    v[k] = vv;
    p[k] = pp;
  }
  std::vector<double> wr_list, scaled_list;
  double max_scaled = 0.0;
  std::vector<AngularField> vf, vrf, vrrf;
  const GridPtr& grid = g.grid();
  for (std::size_t k = 0; k < ns; ++k) {
    const double r = g.radius(k);
    const double vss = (1.0 + alpha[k]) * p[k] + beta[k] * v[k];
    vf.push_back(AngularField::constant(grid, v[k]));
    vrf.push_back(AngularField::constant(grid, p[k] / r));
    vrrf.push_back(AngularField::constant(grid, (vss - p[k]) / (r * r)));
    // W = V (1/u)' - (1/u) V'.
    const double w = -v[k] * ur[k] / (ubar[k] * ubar[k]) - p[k] / (r * ubar[k]);
    wr_list.push_back(w);
    scaled_list.push_back(w / ubar[k]);
    max_scaled = std::max(max_scaled, std::abs(w / ubar[k]));
  }
  const auto [lo, hi] = std::minmax_element(scaled_list.begin(), scaled_list.end());
  const double decades = std::max(1.0, std::log10(g.radius(ns - 1) / g.radius(0)));
  const double drift = (*hi - *lo) / decades;
  PotentialMetadata meta;
  meta.inner_condition = "none";
  meta.outer_closure = "bounded-branch";
  meta.outer_radius = g.radius(ns - 1);
  return SymmetricPotential{PotentialField::from_nodal(grid, g.radii(), vf, vrf, vrrf, meta),
                            std::move(wr_list), std::move(scaled_list), max_scaled, drift};
}

// ------------------------------------------------------------- Laplace solve

struct LaplaceSolver::Impl {
  GridPtr grid;
  std::vector<double> radii, s;
  std::size_t ns = 0, nm = 0;
  std::vector<Stencil> d1, d2;
  InnerCondition inner = InnerCondition::kDirichlet;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

LaplaceSolver::LaplaceSolver(const QuasiSphericalMetric& g, InnerCondition inner,
                             OuterClosure outer, int stencil_width)
    : impl_(new Impl) {
  Impl& im = *impl_;
  im.grid = g.grid();
  im.radii = g.radii();
  im.s = log_of(im.radii);
  im.ns = im.radii.size();
  im.inner = inner;
  const SphereGrid& sg = *im.grid;
  const int n = sg.dim();
  im.nm = sg.num_modes();
  const std::size_t nm = im.nm;
  if (stencil_width < 3 || std::size_t(stencil_width) > im.ns) {
    throw Error(ErrorCode::kTooFewStations, "stencil width does not fit the stations");
  }
  im.d1 = derivative_stencils(im.s, 1, stencil_width);
  im.d2 = derivative_stencils(im.s, 2, stencil_width);

  // Synthesis matrices for value and gradient components, analysis = S^T W.
  const std::size_t nn = sg.num_nodes();
  Eigen::MatrixXd sv(nn, nm), sp(nn, nm), sa(nn, nm);
  for (std::size_t j = 0; j < nm; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(Eigen::Index(nm));
    e(Eigen::Index(j)) = 1.0;
    sv.col(Eigen::Index(j)) = sg.synthesize(e, Component::kValue);
    sp.col(Eigen::Index(j)) = sg.synthesize(e, Component::kDPolar);
    sa.col(Eigen::Index(j)) = n == 3 ? sg.synthesize(e, Component::kDAzimuthal)
                                     : Eigen::VectorXd::Zero(Eigen::Index(nn));
  }
  const Eigen::MatrixXd an = (sg.weights().asDiagonal() * sv).transpose();
  Eigen::VectorXd neg_lambda(nm);
  for (std::size_t j = 0; j < nm; ++j) neg_lambda(Eigen::Index(j)) = -sg.eigenvalue(sg.degree(j));
  const Eigen::MatrixXd s_lap = sv * neg_lambda.asDiagonal();

  std::vector<Eigen::Triplet<double>> trip;
  const std::size_t dim = im.ns * nm;
  auto idx = [nm](std::size_t k, std::size_t j) { return int(k * nm + j); };

  // Interior: V_ss + (n - 2 - r u_r / u) V_s + u grad u . grad V + u^2 Lap V = 0.
  for (std::size_t k = 1; k + 1 < im.ns; ++k) {
    const double r = im.radii[k];
    const Eigen::ArrayXd u = g.lapse(k).v.array();
    const Eigen::ArrayXd ur = g.lapse_r(k).v.array();
    const TangentField gu = gradient(g.lapse_deviation(k));
    const Eigen::VectorXd a = ((n - 2.0) - r * ur / u).matrix();
    const Eigen::MatrixXd b = an * (a.asDiagonal() * sv);
    const Eigen::MatrixXd ang =
        an * ((u * u).matrix().asDiagonal() * s_lap +
              (u * gu.polar.array()).matrix().asDiagonal() * sp +
              (u * gu.azimuthal.array()).matrix().asDiagonal() * sa);
    const double thresh = 1e-15 * std::max({1.0, b.cwiseAbs().maxCoeff(), ang.cwiseAbs().maxCoeff()});
    const Stencil& st1 = im.d1[k];
    const Stencil& st2 = im.d2[k];
    const std::size_t lo = std::min(st1.start, st2.start);
    const std::size_t hi = std::max(st1.start + st1.weights.size(), st2.start + st2.weights.size());
    for (std::size_t i = lo; i < hi; ++i) {
      const double w1 = (i >= st1.start && i < st1.start + st1.weights.size())
                            ? st1.weights[i - st1.start]
                            : 0.0;
      const double w2 = (i >= st2.start && i < st2.start + st2.weights.size())
                            ? st2.weights[i - st2.start]
                            : 0.0;
      Eigen::MatrixXd blk = w1 * b;
      blk.diagonal().array() += w2;
      if (i == k) blk += ang;
      for (std::size_t p = 0; p < nm; ++p) {
        for (std::size_t q = 0; q < nm; ++q) {
          const double val = blk(Eigen::Index(p), Eigen::Index(q));
          if (std::abs(val) > thresh) trip.emplace_back(idx(k, p), idx(i, q), val);
        }
      }
    }
  }
  // Inner row.
  for (std::size_t j = 0; j < nm; ++j) {
    if (inner == InnerCondition::kDirichlet) {
      trip.emplace_back(idx(0, j), idx(0, j), 1.0);
    } else {
      const Stencil& st = im.d1[0];
      for (std::size_t i = 0; i < st.weights.size(); ++i) {
        trip.emplace_back(idx(0, j), idx(st.start + i, j), st.weights[i]);
      }
    }
  }
  // Outer Robin row: W_s + rho_l W = 0.
  const std::size_t last = im.ns - 1;
  const double big_r = im.radii[last];
  double rho0 = 0.0;
  if (outer == OuterClosure::kBounded) {
    const double ub = spherical_mean(g.lapse(last));
    const double m_eff = 0.5 * std::pow(big_r, n - 2) * (1.0 - 1.0 / (ub * ub));
    const double tail = std::abs(m_eff) > 1e-14
                            ? (1.0 - 1.0 / ub) / ((n - 2) * m_eff)
                            : std::pow(big_r, 2 - n) / (n - 2);
    rho0 = std::pow(big_r, 2 - n) * ub / tail;
  }
  for (std::size_t j = 0; j < nm; ++j) {
    const int l = sg.degree(j);
    double rho;
    if (outer == OuterClosure::kBounded) {
      rho = l == 0 ? rho0 : double(n - 2 + l);
    } else {
      rho = l <= 1 ? -double(l) : double(n - 2 + l);
    }
    const Stencil& st = im.d1[last];
    for (std::size_t i = 0; i < st.weights.size(); ++i) {
      double val = st.weights[i];
      if (st.start + i == last) val += rho;
      trip.emplace_back(idx(last, j), idx(st.start + i, j), val);
    }
  }
  Eigen::SparseMatrix<double> mat{Eigen::Index(dim), Eigen::Index(dim)};
  mat.setFromTriplets(trip.begin(), trip.end());
  mat.makeCompressed();
  im.lu.analyzePattern(mat);
  im.lu.factorize(mat);
  if (im.lu.info() != Eigen::Success) {
    delete impl_;
    throw Error(ErrorCode::kSingularSystem, "discrete Laplace operator is singular");
  }
}

LaplaceSolver::~LaplaceSolver() { delete impl_; }

std::size_t LaplaceSolver::num_unknowns() const { return impl_->ns * impl_->nm; }

void LaplaceSolver::solve_deviation(const Eigen::VectorXd& inner_w, std::vector<ModeCoeffs>* w,
                                    std::vector<ModeCoeffs>* w_r,
                                    std::vector<ModeCoeffs>* w_rr) const {
  const Impl& im = *impl_;
  if (std::size_t(inner_w.size()) != im.nm) {
    throw Error(ErrorCode::kGridMismatch, "inner data does not match the grid");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(im.ns * im.nm));
  rhs.head(Eigen::Index(im.nm)) =
      im.inner == InnerCondition::kDirichlet ? inner_w : Eigen::VectorXd(im.radii[0] * inner_w);
  const Eigen::VectorXd x = im.lu.solve(rhs);
  w->clear();
  w_r->clear();
  w_rr->clear();
  for (std::size_t k = 0; k < im.ns; ++k) {
    w->push_back(ModeCoeffs{im.grid, x.segment(Eigen::Index(k * im.nm), Eigen::Index(im.nm))});
  }
  for (std::size_t k = 0; k < im.ns; ++k) {
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(Eigen::Index(im.nm));
    Eigen::VectorXd dss = Eigen::VectorXd::Zero(Eigen::Index(im.nm));
    const Stencil& s1 = im.d1[k];
    const Stencil& s2 = im.d2[k];
    for (std::size_t i = 0; i < s1.weights.size(); ++i) ds += s1.weights[i] * (*w)[s1.start + i].c;
    for (std::size_t i = 0; i < s2.weights.size(); ++i) dss += s2.weights[i] * (*w)[s2.start + i].c;
    const double r = im.radii[k];
    w_r->push_back(ModeCoeffs{im.grid, ds / r});
    w_rr->push_back(ModeCoeffs{im.grid, (dss - ds) / (r * r)});
  }
}

PotentialField LaplaceSolver::solve(const ModeCoeffs& inner_data) const {
  require_same_grid(inner_data.grid, impl_->grid);
  Eigen::VectorXd data = inner_data.c;
  if (impl_->inner == InnerCondition::kDirichlet) data -= unit_constant(impl_->grid);
  std::vector<ModeCoeffs> w, wr, wrr;
  solve_deviation(data, &w, &wr, &wrr);
  return PotentialField(impl_->grid, impl_->radii, std::move(w), std::move(wr), std::move(wrr));
}

PotentialField solve_potential(const QuasiSphericalMetric& g, const PotentialProblem& problem) {
  require_same_grid(problem.inner_data.grid, g.grid());
  require_scalar_flat(g, problem.audit_tolerance);
  const LaplaceSolver solver(g, problem.inner, problem.outer, problem.stencil_width);
  PotentialField v = solver.solve(problem.inner_data);
  PotentialMetadata meta;
  meta.inner_condition = problem.inner == InnerCondition::kDirichlet ? "dirichlet" : "neumann";
  meta.outer_closure = problem.outer == OuterClosure::kBounded ? "bounded-robin" : "growing-robin";
  meta.outer_radius = g.radii().back();
  v.set_metadata(meta);
  return v;
}

// ------------------------------------------------------------ rr potential

PotentialField integrate_rr_potential(const QuasiSphericalMetric& g,
                                      const RadialPotentialOptions& options) {
  const GridPtr& grid = g.grid();
  const SphereGrid& sg = *grid;
  const int n = sg.dim();
  const double c = scalar_flat_c(n);
  const std::size_t ns = g.num_stations();
  const std::size_t nm = sg.num_modes();
  if (ns < 6) throw Error(ErrorCode::kTooFewStations, "rr integration needs at least six stations");
  const std::vector<double> s = log_of(g.radii());
  const Eigen::MatrixXd q = tail_integral_matrix(s, 6);
  const Eigen::Map<const Eigen::VectorXd> rv(g.radii().data(), Eigen::Index(ns));

  std::vector<Eigen::ArrayXd> u(ns), ur(ns), du(ns);
  std::vector<TangentField> gu(ns);
  for (std::size_t k = 0; k < ns; ++k) {
    du[k] = nodal_deviation(g.lapse_deviation(k));
    u[k] = 1.0 + du[k];
    ur[k] = g.lapse_r(k).v.array();
    gu[k] = gradient(g.lapse_deviation(k));
  }
  // Rows are stations, columns are modes.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(Eigen::Index(ns), Eigen::Index(nm));
  Eigen::MatrixXd wr = w, t = w;
  auto source = [&]() {
    for (std::size_t k = 0; k < ns; ++k) {
      const double r = g.radius(k);
      const Eigen::VectorXd wk = w.row(Eigen::Index(k)).transpose();
      const Eigen::ArrayXd v = sg.synthesize(wk, Component::kValue).array() + 1.0;
      const Eigen::ArrayXd vr =
          sg.synthesize(wr.row(Eigen::Index(k)).transpose(), Component::kValue).array();
      const Eigen::ArrayXd gg = gradient_inner(gu[k], gradient(ModeCoeffs{grid, wk})).v.array();
      const Eigen::ArrayXd& dev = du[k];
      const Eigen::ArrayXd tk = ur[k] / u[k] * vr - (u[k] / (r * r)) * gg -
                                (c / (r * r)) * dev * (2.0 + dev) * v;
      t.row(Eigen::Index(k)) = sg.analyze(tk.matrix(), Component::kValue).transpose();
    }
  };
  const double big_r = g.radius(ns - 1);
  const std::size_t tail_rows = std::min<std::size_t>(ns, 12);
  const std::vector<double> r_tail(g.radii().end() - Eigen::Index(tail_rows), g.radii().end());
  std::vector<std::vector<PowerTerm>> terms(std::size_t(sg.lmax()) + 1);
  std::vector<std::vector<std::size_t>> modes(terms.size());
  for (std::size_t j = 0; j < nm; ++j) modes[std::size_t(sg.degree(j))].push_back(j);
  for (std::size_t l = 0; l < terms.size(); ++l) {
    terms[l] = rr_tail_terms(n, int(l), std::min<std::size_t>(3, tail_rows - 2));
  }
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    source();
    // V_r(r) = -int_r^inf T, V(r) = 1 - int_r^inf V_r; beyond the last
    // station T follows its fitted expansion.
    Eigen::MatrixXd new_wr = -(q * (rv.asDiagonal() * t));
    Eigen::RowVectorXd v_tail = Eigen::RowVectorXd::Zero(Eigen::Index(nm));
    for (std::size_t l = 0; l < terms.size(); ++l) {
      if (modes[l].empty()) continue;
      Eigen::MatrixXd y(Eigen::Index(tail_rows), Eigen::Index(modes[l].size()));
      for (std::size_t i = 0; i < modes[l].size(); ++i) {
        y.col(Eigen::Index(i)) = t.col(Eigen::Index(modes[l][i])).tail(Eigen::Index(tail_rows));
      }
      const CurveFit fit = fit_curves(r_tail, y, terms[l], terms[l].front().power);
      for (std::size_t i = 0; i < modes[l].size(); ++i) {
        double vr_r = 0.0, v_r = 0.0;
        for (std::size_t e = 0; e < terms[l].size(); ++e) {
          const PowerTerm& pt = terms[l][e];
          const double cf = fit.coeffs(Eigen::Index(e), Eigen::Index(i));
          vr_r -= cf * tail_integral(pt.power, pt.log_power, big_r);
          v_r += cf * (tail_integral(pt.power + 1.0, pt.log_power, big_r) -
                       big_r * tail_integral(pt.power, pt.log_power, big_r));
        }
        new_wr.col(Eigen::Index(modes[l][i])).array() += vr_r;
        v_tail(Eigen::Index(modes[l][i])) = v_r;
      }
    }
    Eigen::MatrixXd new_w = -(q * (rv.asDiagonal() * new_wr));
    new_w.rowwise() += v_tail;
    const double change = (new_w - w).cwiseAbs().maxCoeff() + (new_wr - wr).cwiseAbs().maxCoeff();
    const double scale = 1.0 + new_w.cwiseAbs().maxCoeff();
    w = new_w;
    wr = new_wr;
    if (change <= options.tolerance * scale) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kSingularSystem, "rr integration did not converge");
  }
  source();
  std::vector<ModeCoeffs> dv, dvr, dvrr;
  for (std::size_t k = 0; k < ns; ++k) {
    dv.push_back(ModeCoeffs{grid, w.row(Eigen::Index(k)).transpose()});
    dvr.push_back(ModeCoeffs{grid, wr.row(Eigen::Index(k)).transpose()});
    dvrr.push_back(ModeCoeffs{grid, t.row(Eigen::Index(k)).transpose()});
  }
  PotentialMetadata meta;
  meta.inner_condition = "none";
  meta.outer_closure = "rr-from-infinity";
  meta.outer_radius = big_r;
  return PotentialField(grid, g.radii(), std::move(dv), std::move(dvr), std::move(dvrr), meta);
}

// ------------------------------------------------------- expansion of V

double potential_hat_factor(int n) {
  if (n == 3) return -0.1;
  const double nn = n;
  const double p = nn + 2.0 / (nn - 1.0);
  return -(nn - 1) * (nn - 2) / (p * (p + 1));
}

PotentialExpansionReport potential_expansion(const QuasiSphericalMetric& g,
                                             const PotentialField& v, FitWindow window,
                                             const FitOptions& options) {
  require_compatible(g, v);
  const int n = g.dim();
  const double nn = n;
  PotentialExpansionReport out;
  std::vector<ModeCoeffs> du, dv;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    du.push_back(g.lapse_deviation(k));
    dv.push_back(v.deviation(k));
  }
  out.lapse = fit_expansion(g.radii(), du, window, options);
  out.potential = fit_expansion(v.radii(), dv, window, options);
  const ExpansionReport& lu = out.lapse;
  const ExpansionReport& pv = out.potential;
  out.mass = lu.leading;
  out.leading_gap = std::abs(pv.leading + lu.leading);
  const double target_q = -0.5 * lu.leading * lu.leading;
  out.quadratic_gap = std::abs(pv.quadratic - target_q);
  out.quadratic_relative = target_q != 0.0 ? out.quadratic_gap / std::abs(target_q) : out.quadratic_gap;

  auto rel = [](const Eigen::VectorXd& d, const Eigen::VectorXd& ref) {
    const double nr = ref.norm();
    return nr > 0.0 ? d.norm() / nr : d.norm();
  };
  out.vdot_gap = rel(pv.dot.c + ((nn - 2) / nn) * lu.dot.c, lu.dot.c);
  const ModeCoeffs uhat2 = project(lu.hat, {ModeSelect::kEqual, 2});
  const ModeCoeffs vhat2 = project(pv.hat, {ModeSelect::kEqual, 2});
  out.vhat_gap = rel(vhat2.c - potential_hat_factor(n) * uhat2.c, (potential_hat_factor(n) * uhat2).c);
  out.vtriple_alternative = ModeCoeffs::zeros(g.grid());
  out.vtriple_rederived = ModeCoeffs::zeros(g.grid());
  if (n >= 4) {
    const ModeCoeffs sq = square_l2(lu.dot);
    const ModeCoeffs ut = project(lu.triple, {ModeSelect::kEqual, 2});
    const ModeCoeffs vt = project(pv.triple, {ModeSelect::kEqual, 2});
    const double tail = -(nn - 2) / (2 * (2 * nn - 1));
    out.vtriple_alternative =
        (-(nn - 2) * (nn - 2) / (nn * (2 * nn - 1) * (2 * nn - 2))) * sq + tail * ut;
    out.vtriple_rederived = (-(nn - 2) * (nn + 1) / (4 * (nn - 1) * (2 * nn - 1))) * sq + tail * ut;
    out.vtriple_gap_alternative = rel(vt.c - out.vtriple_alternative.c, out.vtriple_alternative.c);
    out.vtriple_gap_rederived = rel(vt.c - out.vtriple_rederived.c, out.vtriple_rederived.c);
  }
  return out;
}

// --------------------------------------------------------- rigidity probe

ProbeResult rigidity_probe(const QuasiSphericalMetric& g, const ProbeOptions& options) {
  require_scalar_flat(g, options.audit_tolerance);
  const std::size_t ns = g.num_stations();
  check_window_stations(ns, options.inner_skip, options.outer_skip);
  const GridPtr& grid = g.grid();
  const std::size_t nm = grid->num_modes();
  const LaplaceSolver solver(g, InnerCondition::kDirichlet, OuterClosure::kBounded,
                             options.stencil_width);
  std::vector<std::vector<ModeCoeffs>> w(nm), wr(nm), wrr(nm);
  for (std::size_t j = 0; j < nm; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(Eigen::Index(nm));
    e(Eigen::Index(j)) = 1.0;
    solver.solve_deviation(e, &w[j], &wr[j], &wrr[j]);
  }
  const std::vector<double> s = log_of(g.radii());
  const std::size_t k0 = options.inner_skip;
  const std::size_t k1 = ns - 1 - options.outer_skip;
  const ModeCoeffs zero = ModeCoeffs::zeros(grid);
  const Eigen::Index cols = Eigen::Index(nm) + 1;
  Eigen::MatrixXd acc(0, cols);
  double s_total = 0.0;
  for (std::size_t k = k0; k <= k1; ++k) {
    const double dsk = k == k0 ? 0.5 * (s[k0 + 1] - s[k0])
                       : k == k1 ? 0.5 * (s[k1] - s[k1 - 1])
                                 : 0.5 * (s[k + 1] - s[k - 1]);
    s_total += dsk;
    const Background b = background(g, k);
    Eigen::VectorXd col;
    stack_residual(station_residual(b, zero, zero, zero, 1.0), dsk, &col);
    Eigen::MatrixXd blk(col.size(), cols);
    blk.col(cols - 1) = col;
    for (std::size_t j = 0; j < nm; ++j) {
      stack_residual(station_residual(b, w[j][k], wr[j][k], wrr[j][k], 0.0), dsk, &col);
      blk.col(Eigen::Index(j)) = col;
    }
    Eigen::MatrixXd stacked(acc.rows() + blk.rows(), cols);
    stacked << acc, blk;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
    const Eigen::Index keep = std::min(stacked.rows(), cols);
    acc = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
  }
  if (acc.rows() < cols) throw Error(ErrorCode::kSingularSystem, "probe system has too few rows");
  const Eigen::MatrixXd ra = acc.topLeftCorner(cols - 1, cols - 1);
  const Eigen::VectorXd rhs = acc.col(cols - 1).head(cols - 1);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ra);
  const Eigen::VectorXd sv = svd.singularValues();
  const double condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                  : std::numeric_limits<double>::infinity();
  if (!(condition < 1e14)) {
    throw Error(ErrorCode::kSingularSystem, "probe least-squares matrix is singular");
  }
  const Eigen::VectorXd d = -ra.triangularView<Eigen::Upper>().solve(rhs);
  const double j_min = acc(cols - 1, cols - 1) * acc(cols - 1, cols - 1);

  std::vector<ModeCoeffs> bw, bwr, bwrr;
  for (std::size_t k = 0; k < ns; ++k) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(Eigen::Index(nm));
    Eigen::VectorXd ar = a, arr = a;
    for (std::size_t j = 0; j < nm; ++j) {
      a += d(Eigen::Index(j)) * w[j][k].c;
      ar += d(Eigen::Index(j)) * wr[j][k].c;
      arr += d(Eigen::Index(j)) * wrr[j][k].c;
    }
    bw.push_back(ModeCoeffs{grid, a});
    bwr.push_back(ModeCoeffs{grid, ar});
    bwrr.push_back(ModeCoeffs{grid, arr});
  }
  PotentialMetadata meta;
  meta.inner_condition = "probe-optimal-dirichlet";
  meta.outer_closure = "bounded-robin";
  meta.outer_radius = g.radii().back();
  PotentialField best(grid, g.radii(), bw, bwr, bwrr, meta);
  const StaticResidual res = static_residual(g, best, FitWindow{g.radius(k0), g.radius(k1)});
  return ProbeResult{std::sqrt(j_min / s_total), res.aggregate,
                     ModeCoeffs{grid, d + unit_constant(grid)}, std::move(best), nm, condition};
}

// ------------------------------------------------- defect decomposition

DefectDecomposition defect_decomposition(const QuasiSphericalMetric& g, const PotentialField& v,
                                         double curl_tolerance) {
  require_compatible(g, v);
  const GridPtr& grid = g.grid();
  const SphereGrid& sg = *grid;
  const int n = sg.dim();
  const ModeSelector nonconstant{ModeSelect::kAtLeast, 1};
  DefectDecomposition out;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    const double r = g.radius(k);
    DefectStation st;
    st.radius = r;
    st.u_breve = project(g.lapse_deviation(k), nonconstant);
    st.v_breve = project(v.deviation(k), nonconstant);
    const ModeCoeffs ur_breve = project(g.lapse_r_coeffs(k), nonconstant);
    const Eigen::ArrayXd u = g.lapse(k).v.array();
    const Eigen::ArrayXd ur = g.lapse_r(k).v.array();
    const Eigen::ArrayXd vr = v.radial(k).v.array();
    const Eigen::ArrayXd inv = 1.0 / u;
    const Eigen::ArrayXd dev = nodal_deviation(g.lapse_deviation(k));
    const Eigen::ArrayXd wv = nodal_deviation(v.deviation(k));
    // V u^{-3} - 1 and 1 - V/u without cancellation.
    const Eigen::ArrayXd vu3_minus_1 = (wv - dev * (3.0 + dev * (3.0 + dev))) * inv * inv * inv;
    const TangentField gub = gradient(st.u_breve);
    const TangentField gvb = gradient(st.v_breve);

    // dF = -r u^{-3} V_r du + (u^{-2} - 1) dV + (n - 2)(V u^{-3} - 1) du.
    const Eigen::ArrayXd c_u = -r * inv * inv * inv * vr + (n - 2) * vu3_minus_1;
    const Eigen::ArrayXd c_v = -dev * (2.0 + dev) * inv * inv;
    const TangentField omega{grid, (c_u * gub.polar.array() + c_v * gvb.polar.array()).matrix(),
                             (c_u * gub.azimuthal.array() + c_v * gvb.azimuthal.array()).matrix()};
    st.f = gradient_potential(omega);
    const TangentField gf = gradient(st.f);
    const TangentField rem{grid, omega.polar - gf.polar, omega.azimuthal - gf.azimuthal};
    const double om = l2_norm(omega);
    const double rn = l2_norm(rem);
    st.f_curl = om > 0.0 ? rn / om : 0.0;
    if (rn > 1e-12 && st.f_curl > curl_tolerance) {
      std::ostringstream msg;
      msg << "F right side is not a gradient at r=" << r << " (relative remainder " << st.f_curl
          << ")";
      throw Error(ErrorCode::kNotIntegrable, msg.str());
    }
    out.max_curl = std::max(out.max_curl, st.f_curl);

    // dG = div[(1 - V/u) Hess u_breve].
    const SymTensorField h = covariant_hessian(st.u_breve);
    const Eigen::ArrayXd fac = (dev - wv) * inv;
    st.g = divergence_potential(SymTensorField{grid, (fac * h.pp.array()).matrix(),
                                               (fac * h.pa.array()).matrix(),
                                               (fac * h.aa.array()).matrix()});

    const Eigen::ArrayXd ub = sg.synthesize(st.u_breve.c, Component::kValue).array();
    const Eigen::ArrayXd lap_ub =
        sg.synthesize(laplace_beltrami(st.u_breve).c, Component::kValue).array();
    const Eigen::ArrayXd u_minus_u3 = -dev * u * (2.0 + dev);
    const Eigen::ArrayXd i_nodal = vu3_minus_1 * r * ur / (n - 2) +
                                   dev * (2.0 + dev) * lap_ub / (n - 2) +
                                   0.5 * (n - 1) * (u_minus_u3 + 2.0 * ub);
    st.i = project(analyze(AngularField{grid, i_nodal.matrix()}), nonconstant);
    st.a = spherical_mean(AngularField{grid, (r * inv * inv * vr).matrix()});

    const ModeCoeffs lhs = r * ur_breve + double(n - 1) * st.u_breve;
    const ModeCoeffs rhs = st.f + (1.0 / (n - 2)) * st.g + st.i;
    st.ode_residual = synthesize(lhs - rhs);
    st.ode_l2 = l2_norm(st.ode_residual);
    st.u_breve_l2 = coeff_norm(st.u_breve);
    out.stations.push_back(std::move(st));
  }
  return out;
}

}  // namespace qsm
