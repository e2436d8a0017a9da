#include "qsm/sphere_spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsm/error.hpp"
#include "qsm/quadrature.hpp"

namespace qsm {

double unit_sphere_area(int k) {
  const double h = 0.5 * (k + 1);
  return 2.0 * std::pow(M_PI, h) / std::tgamma(h);
}

SphereGrid::SphereGrid(int n, int lmax) : n_(n), lmax_(lmax) {
  if (n < kMinDimension || n > kMaxDimension) {
    throw Error(ErrorCode::kUnsupportedDimension,
                "dimension n=" + std::to_string(n) + " outside [3, 8]");
  }
  if (lmax < kMinLmax) {
    throw Error(ErrorCode::kLmaxTooSmall, "lmax=" + std::to_string(lmax) + " below 4");
  }
  const int ntheta = 2 * lmax + 2;
  const double alpha = 0.5 * (n - 3);
  GaussRule rule = gauss_gegenbauer(ntheta, alpha);
  // Node order from north pole to south pole.
  polar_.resize(ntheta);
  polar_weight_.resize(ntheta);
  for (int i = 0; i < ntheta; ++i) {
    polar_[i] = std::acos(rule.nodes[ntheta - 1 - i]);
    polar_weight_[i] = rule.weights[ntheta - 1 - i];
  }

  if (n == 3) {
    nphi_ = std::size_t(4 * lmax + 2);
    azimuth_.resize(nphi_);
    cos_table_.resize(nphi_ * (lmax + 1));
    sin_table_.resize(nphi_ * (lmax + 1));
    for (std::size_t ip = 0; ip < nphi_; ++ip) {
      azimuth_[ip] = 2.0 * M_PI * double(ip) / double(nphi_);
      for (int m = 0; m <= lmax; ++m) {
        cos_table_[ip * (lmax + 1) + m] = std::cos(m * azimuth_[ip]);
        sin_table_[ip * (lmax + 1) + m] = std::sin(m * azimuth_[ip]);
      }
    }
    for (int l = 0; l <= lmax; ++l) {
      for (int m = -l; m <= l; ++m) {
        degree_.push_back(l);
        order_.push_back(m);
      }
    }
    weights_.resize(std::size_t(ntheta) * nphi_);
    const double dphi = 2.0 * M_PI / double(nphi_);
    for (int it = 0; it < ntheta; ++it) {
      for (std::size_t ip = 0; ip < nphi_; ++ip) {
        weights_[it * nphi_ + ip] = polar_weight_[it] * dphi;
      }
    }

    ntab_ = std::size_t((lmax + 1) * (lmax + 2) / 2);
    for (auto* t : {&p_, &dp_, &d2p_, &p_over_sin_, &mixed_, &aa_, &zero_}) {
      t->assign(ntab_ * ntheta, 0.0);
    }
    std::vector<double> p, dp;
    for (int it = 0; it < ntheta; ++it) {
      const double th = polar_[it];
      const double s = std::sin(th);
      const double cot = std::cos(th) / s;
      normalized_legendre(lmax, th, p, dp);
      for (int l = 0; l <= lmax; ++l) {
        for (int m = 0; m <= l; ++m) {
          const std::size_t q = packed(l, m);
          const std::size_t k = it * ntab_ + q;
          const double lam = double(l) * (l + 1);
          const double m2 = double(m) * m;
          p_[k] = p[q];
          dp_[k] = dp[q];
          d2p_[k] = -cot * dp[q] - (lam - m2 / (s * s)) * p[q];
          p_over_sin_[k] = p[q] / s;
          mixed_[k] = (dp[q] - cot * p[q]) / s;
          aa_[k] = cot * dp[q] - m2 * p[q] / (s * s);
        }
      }
    }
  } else {
    nphi_ = 1;
    for (int l = 0; l <= lmax; ++l) {
      degree_.push_back(l);
      order_.push_back(0);
    }
    const double wside = unit_sphere_area(n - 2);
    const double norm = 1.0 / std::sqrt(wside);
    weights_.resize(ntheta);
    ntab_ = std::size_t(lmax + 1);
    for (auto* t : {&p_, &dp_, &d2p_, &p_over_sin_, &mixed_, &aa_, &zero_}) {
      t->assign(ntab_ * ntheta, 0.0);
    }
    std::vector<double> p, dp;
    for (int it = 0; it < ntheta; ++it) {
      weights_[it] = wside * polar_weight_[it];
      const double th = polar_[it];
      const double x = std::cos(th);
      const double s = std::sin(th);
      const double cot = x / s;
      orthonormal_gegenbauer(lmax, alpha, x, p, dp);
      for (int l = 0; l <= lmax; ++l) {
        const std::size_t k = it * ntab_ + l;
        const double y = norm * p[l];
        const double yt = -s * norm * dp[l];
        p_[k] = y;
        dp_[k] = yt;
        d2p_[k] = -(n - 2) * cot * yt - eigenvalue(l) * y;
        aa_[k] = cot * yt;
      }
    }
  }
  measure_ = 0.0;
  for (Eigen::Index i = 0; i < weights_.size(); ++i) measure_ += weights_[i];
}

std::size_t SphereGrid::index(int l, int m) const {
  if (l < 0 || l > lmax_ || std::abs(m) > l || (n_ != 3 && m != 0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "mode (" + std::to_string(l) + ", " + std::to_string(m) + ") not in basis");
  }
  return n_ == 3 ? std::size_t(l * l + l + m) : std::size_t(l);
}

double SphereGrid::polar(std::size_t node) const { return polar_[node / nphi_]; }

double SphereGrid::azimuth(std::size_t node) const {
  return n_ == 3 ? azimuth_[node % nphi_] : 0.0;
}

const std::vector<double>& SphereGrid::table(Component comp) const {
  switch (comp) {
    case Component::kValue:
      return p_;
    case Component::kDPolar:
      return dp_;
    case Component::kDAzimuthal:
      return n_ == 3 ? p_over_sin_ : zero_;
    case Component::kHessPP:
      return d2p_;
    case Component::kHessPA:
      return n_ == 3 ? mixed_ : zero_;
    case Component::kHessAA:
      return aa_;
  }
  return zero_;
}

bool SphereGrid::derivative_kind(Component comp) const {
  return comp == Component::kDAzimuthal || comp == Component::kHessPA;
}

Eigen::VectorXd SphereGrid::synthesize(const Eigen::VectorXd& coeffs, Component comp) const {
  if (std::size_t(coeffs.size()) != num_modes()) {
    throw Error(ErrorCode::kGridMismatch, "coefficient vector length does not match grid");
  }
  const std::vector<double>& tab = table(comp);
  const std::size_t nt = polar_.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_nodes());
  if (n_ != 3) {
    for (std::size_t it = 0; it < nt; ++it) {
      double acc = 0.0;
      for (int l = 0; l <= lmax_; ++l) acc += tab[it * ntab_ + l] * coeffs[l];
      out[it] = acc;
    }
    return out;
  }
  const bool deriv = derivative_kind(comp);
  const int lm1 = lmax_ + 1;
  std::vector<double> ac(lm1), as(lm1);
  const double r2 = std::sqrt(2.0);
  for (std::size_t it = 0; it < nt; ++it) {
    const double* row = tab.data() + it * ntab_;
    for (int m = 0; m <= lmax_; ++m) {
      double c = 0.0, s = 0.0;
      for (int l = m; l <= lmax_; ++l) {
        const double t = row[packed(l, m)];
        c += t * coeffs[l * l + l + m];
        if (m > 0) s += t * coeffs[l * l + l - m];
      }
      const double sm = m == 0 ? 1.0 : r2;
      ac[m] = c * sm;
      as[m] = s * r2;
    }
    for (std::size_t ip = 0; ip < nphi_; ++ip) {
      const double* ct = cos_table_.data() + ip * lm1;
      const double* st = sin_table_.data() + ip * lm1;
      double acc = 0.0;
      if (!deriv) {
        for (int m = 0; m <= lmax_; ++m) acc += ac[m] * ct[m] + as[m] * st[m];
      } else {
        for (int m = 1; m <= lmax_; ++m) acc += m * (as[m] * ct[m] - ac[m] * st[m]);
      }
      out[it * nphi_ + ip] = acc;
    }
  }
  return out;
}

Eigen::VectorXd SphereGrid::analyze(const Eigen::VectorXd& values, Component comp) const {
  if (std::size_t(values.size()) != num_nodes()) {
    throw Error(ErrorCode::kGridMismatch, "nodal vector length does not match grid");
  }
  const std::vector<double>& tab = table(comp);
  const std::size_t nt = polar_.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_modes());
  if (n_ != 3) {
    for (std::size_t it = 0; it < nt; ++it) {
      const double fw = values[it] * weights_[it];
      for (int l = 0; l <= lmax_; ++l) out[l] += fw * tab[it * ntab_ + l];
    }
    return out;
  }
  const bool deriv = derivative_kind(comp);
  const int lm1 = lmax_ + 1;
  std::vector<double> cm(lm1), sm(lm1);
  const double r2 = std::sqrt(2.0);
  for (std::size_t it = 0; it < nt; ++it) {
    std::fill(cm.begin(), cm.end(), 0.0);
    std::fill(sm.begin(), sm.end(), 0.0);
    for (std::size_t ip = 0; ip < nphi_; ++ip) {
      const double f = values[it * nphi_ + ip];
      const double* ct = cos_table_.data() + ip * lm1;
      const double* st = sin_table_.data() + ip * lm1;
      for (int m = 0; m <= lmax_; ++m) {
        cm[m] += f * ct[m];
        sm[m] += f * st[m];
      }
    }
    const double w = weights_[it * nphi_];
    for (int m = 0; m <= lmax_; ++m) {
      const double s_m = m == 0 ? 1.0 : r2;
      double cos_part, sin_part;
      if (!deriv) {
        cos_part = s_m * cm[m];
        sin_part = r2 * sm[m];
      } else {
        cos_part = -m * s_m * sm[m];
        sin_part = m * r2 * cm[m];
      }
      const double* row = tab.data() + it * ntab_;
      for (int l = m; l <= lmax_; ++l) {
        const double t = w * row[packed(l, m)];
        out[l * l + l + m] += t * cos_part;
        if (m > 0) out[l * l + l - m] += t * sin_part;
      }
    }
  }
  return out;
}

double SphereGrid::evaluate(const Eigen::VectorXd& coeffs, double theta, double phi) const {
  if (std::size_t(coeffs.size()) != num_modes()) {
    throw Error(ErrorCode::kGridMismatch, "coefficient vector length does not match grid");
  }
  std::vector<double> p, dp;
  double acc = 0.0;
  if (n_ != 3) {
    orthonormal_gegenbauer(lmax_, 0.5 * (n_ - 3), std::cos(theta), p, dp);
    const double norm = 1.0 / std::sqrt(unit_sphere_area(n_ - 2));
    for (int l = 0; l <= lmax_; ++l) acc += norm * p[l] * coeffs[l];
    return acc;
  }
  normalized_legendre(lmax_, theta, p, dp);
  const double r2 = std::sqrt(2.0);
  for (int l = 0; l <= lmax_; ++l) {
    acc += p[packed(l, 0)] * coeffs[l * l + l];
    for (int m = 1; m <= l; ++m) {
      acc += r2 * p[packed(l, m)] *
             (coeffs[l * l + l + m] * std::cos(m * phi) + coeffs[l * l + l - m] * std::sin(m * phi));
    }
  }
  return acc;
}

GridPtr make_grid(int n, int lmax) { return std::make_shared<const SphereGrid>(n, lmax); }

ModeCoeffs ModeCoeffs::zeros(const GridPtr& grid) {
  return ModeCoeffs{grid, Eigen::VectorXd::Zero(grid->num_modes())};
}

AngularField AngularField::constant(const GridPtr& grid, double value) {
  return AngularField{grid, Eigen::VectorXd::Constant(grid->num_nodes(), value)};
}

void require_same_grid(const GridPtr& a, const GridPtr& b) {
  if (!a || !b || !a->same_as(*b)) {
    throw Error(ErrorCode::kGridMismatch, "operands live on different sphere grids");
  }
}

ModeCoeffs operator+(const ModeCoeffs& a, const ModeCoeffs& b) {
  require_same_grid(a.grid, b.grid);
  return ModeCoeffs{a.grid, a.c + b.c};
}

ModeCoeffs operator-(const ModeCoeffs& a, const ModeCoeffs& b) {
  require_same_grid(a.grid, b.grid);
  return ModeCoeffs{a.grid, a.c - b.c};
}

ModeCoeffs operator*(double s, const ModeCoeffs& a) { return ModeCoeffs{a.grid, s * a.c}; }

AngularField operator+(const AngularField& a, const AngularField& b) {
  require_same_grid(a.grid, b.grid);
  return AngularField{a.grid, a.v + b.v};
}

AngularField operator-(const AngularField& a, const AngularField& b) {
  require_same_grid(a.grid, b.grid);
  return AngularField{a.grid, a.v - b.v};
}

AngularField operator*(const AngularField& a, const AngularField& b) {
  require_same_grid(a.grid, b.grid);
  return AngularField{a.grid, a.v.cwiseProduct(b.v)};
}

AngularField operator*(double s, const AngularField& a) { return AngularField{a.grid, s * a.v}; }

ModeCoeffs analyze(const AngularField& f) {
  if (!f.grid) throw Error(ErrorCode::kGridMismatch, "field has no grid");
  return ModeCoeffs{f.grid, f.grid->analyze(f.v, Component::kValue)};
}

AngularField synthesize(const ModeCoeffs& c) {
  if (!c.grid) throw Error(ErrorCode::kGridMismatch, "coefficients have no grid");
  return AngularField{c.grid, c.grid->synthesize(c.c, Component::kValue)};
}

ModeCoeffs laplace_beltrami(const ModeCoeffs& c) {
  ModeCoeffs out = c;
  for (std::size_t j = 0; j < c.grid->num_modes(); ++j) {
    out.c[j] *= -c.grid->eigenvalue(c.grid->degree(j));
  }
  return out;
}

ModeCoeffs project(const ModeCoeffs& c, ModeSelector selector) {
  ModeCoeffs out = c;
  for (std::size_t j = 0; j < c.grid->num_modes(); ++j) {
    const int l = c.grid->degree(j);
    bool keep = false;
    switch (selector.kind) {
      case ModeSelect::kEqual:
        keep = l == selector.degree;
        break;
      case ModeSelect::kAtMost:
        keep = l <= selector.degree;
        break;
      case ModeSelect::kAtLeast:
        keep = l >= selector.degree;
        break;
    }
    if (!keep) out.c[j] = 0.0;
  }
  return out;
}

TangentField gradient(const ModeCoeffs& c) {
  const SphereGrid& g = *c.grid;
  return TangentField{c.grid, g.synthesize(c.c, Component::kDPolar),
                      g.synthesize(c.c, Component::kDAzimuthal)};
}

AngularField gradient_inner(const TangentField& a, const TangentField& b) {
  require_same_grid(a.grid, b.grid);
  return AngularField{a.grid,
                      a.polar.cwiseProduct(b.polar) + a.azimuthal.cwiseProduct(b.azimuthal)};
}

namespace {

ModeCoeffs analyze_bandlimited(const AngularField& f) {
  ModeCoeffs c = analyze(f);
  const Eigen::VectorXd back = f.grid->synthesize(c.c, Component::kValue);
  const double scale = std::max(1.0, f.v.cwiseAbs().maxCoeff());
  const double err = (back - f.v).cwiseAbs().maxCoeff();
  if (err > SpectralTolerances::kBandlimit * scale) {
    throw Error(ErrorCode::kInsufficientDealiasing,
                "field is not bandlimited at lmax=" + std::to_string(f.grid->lmax()) +
                    " (round-trip error " + std::to_string(err) + ")");
  }
  return c;
}

}  // namespace

AngularField gradient_inner(const AngularField& f, const AngularField& g) {
  require_same_grid(f.grid, g.grid);
  return gradient_inner(gradient(analyze_bandlimited(f)), gradient(analyze_bandlimited(g)));
}

SymTensorField covariant_hessian(const ModeCoeffs& c) {
  const SphereGrid& g = *c.grid;
  return SymTensorField{c.grid, g.synthesize(c.c, Component::kHessPP),
                        g.synthesize(c.c, Component::kHessPA),
                        g.synthesize(c.c, Component::kHessAA)};
}

SymTensorField covariant_hessian(const AngularField& f) {
  return covariant_hessian(analyze_bandlimited(f));
}

AngularField SymTensorField::trace() const {
  const int n = grid->dim();
  const double k = n == 3 ? 1.0 : double(n - 2);
  return AngularField{grid, pp + k * aa};
}

AngularField SymTensorField::traceless_norm() const {
  const int n = grid->dim();
  const Eigen::VectorXd mean = trace().v / double(n - 1);
  const double k = n == 3 ? 1.0 : double(n - 2);
  Eigen::VectorXd out(pp.size());
  for (Eigen::Index i = 0; i < pp.size(); ++i) {
    const double a = pp[i] - mean[i];
    const double b = aa[i] - mean[i];
    out[i] = std::sqrt(a * a + k * b * b + 2.0 * pa[i] * pa[i]);
  }
  return AngularField{grid, out};
}

double integrate(const AngularField& f) {
  const Eigen::VectorXd& w = f.grid->weights();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += w[i] * f.v[i];
  return acc;
}

double l2_norm(const AngularField& f) {
  return std::sqrt(integrate(AngularField{f.grid, f.v.cwiseAbs2()}));
}

double sup_norm(const AngularField& f) { return f.v.size() ? f.v.cwiseAbs().maxCoeff() : 0.0; }

double l2_norm(const TangentField& f) {
  return std::sqrt(integrate(gradient_inner(f, f)));
}

double l2_norm(const SymTensorField& f) {
  const int n = f.grid->dim();
  const double k = n == 3 ? 1.0 : double(n - 2);
  Eigen::VectorXd sq = f.pp.cwiseAbs2() + 2.0 * f.pa.cwiseAbs2() + k * f.aa.cwiseAbs2();
  return std::sqrt(integrate(AngularField{f.grid, sq}));
}

double coeff_norm(const ModeCoeffs& c) { return c.c.norm(); }

ModeCoeffs gradient_potential(const TangentField& w) {
  const SphereGrid& g = *w.grid;
  Eigen::VectorXd rhs =
      g.analyze(w.polar, Component::kDPolar) + g.analyze(w.azimuthal, Component::kDAzimuthal);
  ModeCoeffs out{w.grid, rhs};
  for (std::size_t j = 0; j < g.num_modes(); ++j) {
    const int l = g.degree(j);
    out.c[j] = l == 0 ? 0.0 : rhs[j] / g.eigenvalue(l);
  }
  return out;
}

ModeCoeffs divergence_potential(const SymTensorField& t) {
  const SphereGrid& g = *t.grid;
  const double k = g.dim() == 3 ? 1.0 : double(g.dim() - 2);
  Eigen::VectorXd rhs = g.analyze(t.pp, Component::kHessPP) +
                        2.0 * g.analyze(t.pa, Component::kHessPA) +
                        k * g.analyze(t.aa, Component::kHessAA);
  ModeCoeffs out{t.grid, rhs};
  for (std::size_t j = 0; j < g.num_modes(); ++j) {
    const int l = g.degree(j);
    out.c[j] = l == 0 ? 0.0 : -rhs[j] / g.eigenvalue(l);
  }
  return out;
}

AngularField coordinate_function(const GridPtr& grid, int i) {
  const int n = grid->dim();
  if (i < 1 || i > n || (n != 3 && i != n)) {
    throw Error(ErrorCode::kInvalidArgument,
                "coordinate function x^" + std::to_string(i) + " unavailable for n=" +
                    std::to_string(n));
  }
  AngularField f{grid, Eigen::VectorXd(grid->num_nodes())};
  for (std::size_t k = 0; k < grid->num_nodes(); ++k) {
    const double th = grid->polar(k);
    const double ph = grid->azimuth(k);
    if (i == n) {
      f.v[k] = std::cos(th);
    } else if (i == 1) {
      f.v[k] = std::sin(th) * std::cos(ph);
    } else {
      f.v[k] = std::sin(th) * std::sin(ph);
    }
  }
  return f;
}

ModeCoeffs random_bandlimited(const GridPtr& grid, int max_degree, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ModeCoeffs c = ModeCoeffs::zeros(grid);
  for (std::size_t j = 0; j < grid->num_modes(); ++j) {
    if (grid->degree(j) <= max_degree) c.c[j] = normal(rng);
  }
  return c;
}

ModeCoeffs rotate(const ModeCoeffs& c, const Eigen::Matrix3d& rotation) {
  const SphereGrid& g = *c.grid;
  if (g.dim() != 3) {
    throw Error(ErrorCode::kUnsupportedDimension, "rotations are only supported for n=3");
  }
  AngularField f{c.grid, Eigen::VectorXd(g.num_nodes())};
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    const double th = g.polar(k);
    const double ph = g.azimuth(k);
    Eigen::Vector3d x(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
    Eigen::Vector3d y = rotation.transpose() * x;
    const double th2 = std::acos(std::clamp(y.z(), -1.0, 1.0));
    const double ph2 = std::atan2(y.y(), y.x());
    f.v[k] = g.evaluate(c.c, th2, ph2);
  }
  return analyze(f);
}

namespace {

// Integral of prod x_i^{e_i} over the unit S^{n-1}.
double sphere_moment(const std::vector<int>& e) {
  double num = 1.0;
  int total = 0;
  for (int k : e) {
    if (k % 2 != 0) return 0.0;
    num *= std::tgamma(0.5 * (k + 1));
    total += k;
  }
  return 2.0 * num / std::tgamma(0.5 * (total + double(e.size())));
}

}  // namespace

Eigen::MatrixXd quadratic_gram(int n) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) pairs.emplace_back(i, j);
  }
  const int np = int(pairs.size());
  // Each quadratic is a polynomial: list of (coefficient, exponent vector).
  using Poly = std::vector<std::pair<double, std::vector<int>>>;
  std::vector<Poly> polys(np);
  for (int a = 0; a < np; ++a) {
    const auto [i, j] = pairs[a];
    std::vector<int> e(n, 0);
    e[i] += 1;
    e[j] += 1;
    polys[a].push_back({1.0, e});
    if (i == j) {
      // delta_ij / n written as sum_k x_k^2 / n, valid on the sphere.
      for (int k = 0; k < n; ++k) {
        std::vector<int> ek(n, 0);
        ek[k] = 2;
        polys[a].push_back({-1.0 / n, ek});
      }
    }
  }
  Eigen::MatrixXd gram(np, np);
  for (int a = 0; a < np; ++a) {
    for (int b = a; b < np; ++b) {
      double acc = 0.0;
      for (const auto& [ca, ea] : polys[a]) {
        for (const auto& [cb, eb] : polys[b]) {
          std::vector<int> e(n);
          for (int k = 0; k < n; ++k) e[k] = ea[k] + eb[k];
          acc += ca * cb * sphere_moment(e);
        }
      }
      gram(a, b) = gram(b, a) = acc;
    }
  }
  return gram;
}

}  // namespace qsm
