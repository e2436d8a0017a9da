#pragma once

// Spectral machinery on the unit sphere S^{n-1}.
//
// n = 3 uses the full real spherical-harmonic basis on a Gauss-Legendre x
// uniform-longitude grid. For 4 <= n <= 8 fields are restricted to
// axisymmetric functions of the polar angle and expanded in normalized
// Gegenbauer polynomials on a Gauss-Gegenbauer grid.
//
// All bases are orthonormal with respect to the unit-sphere measure, so the
// coefficient of a constant c is c * sqrt(|S^{n-1}|).
//
// Tangent vectors and symmetric 2-tensors are stored in the orthonormal frame
// (e_theta, e_phi / sin(theta)) of the round metric. For n >= 4 the frame is
// (e_theta, e_1, ..., e_{n-2}) and axisymmetric tensors are diagonal with one
// repeated transverse entry.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

namespace qsm {

class SphereGrid;
using GridPtr = std::shared_ptr<const SphereGrid>;

// Tolerances for 64-bit floating point.
struct SpectralTolerances {
  static constexpr double kQuadrature = 1e-12;
  static constexpr double kRoundTrip = 1e-12;
  static constexpr double kParseval = 1e-10;
  static constexpr double kBandlimit = 1e-9;
};

constexpr int kMinDimension = 3;
constexpr int kMaxDimension = 8;
constexpr int kMinLmax = 4;

// Surface area of the unit sphere S^k in R^{k+1}.
double unit_sphere_area(int k);

// Which angular derivative a transform table represents.
enum class Component {
  kValue,
  kDPolar,      // d/dtheta
  kDAzimuthal,  // (1/sin theta) d/dphi
  kHessPP,      // Hessian (e_theta, e_theta)
  kHessPA,      // Hessian (e_theta, e_phi/sin theta)
  kHessAA,      // Hessian (e_phi/sin, e_phi/sin); transverse entry for n >= 4
};

class SphereGrid {
 public:
  SphereGrid(int n, int lmax);

  int dim() const { return n_; }
  int lmax() const { return lmax_; }
  bool full_sphere() const { return n_ == 3; }

  std::size_t num_nodes() const { return weights_.size(); }
  std::size_t num_modes() const { return degree_.size(); }
  std::size_t num_polar() const { return polar_.size(); }
  std::size_t num_azimuth() const { return n_ == 3 ? nphi_ : 1; }

  int degree(std::size_t mode) const { return degree_[mode]; }
  int order(std::size_t mode) const { return order_[mode]; }
  std::size_t index(int l, int m = 0) const;
  double eigenvalue(int l) const { return double(l) * double(l + n_ - 2); }

  const Eigen::VectorXd& weights() const { return weights_; }
  double measure() const { return measure_; }

  double polar(std::size_t node) const;
  double azimuth(std::size_t node) const;

  // Raw transforms. analyze(values, comp) returns the quadrature inner
  // products of values against the differentiated basis D_comp Y_j, which is
  // the adjoint of synthesize(coeffs, comp).
  Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs, Component comp) const;
  Eigen::VectorXd analyze(const Eigen::VectorXd& values, Component comp) const;

  // Point evaluation of a coefficient vector (phi ignored for n >= 4).
  double evaluate(const Eigen::VectorXd& coeffs, double theta, double phi) const;

  bool same_as(const SphereGrid& other) const {
    return n_ == other.n_ && lmax_ == other.lmax_;
  }

 private:
  const std::vector<double>& table(Component comp) const;
  bool derivative_kind(Component comp) const;
  std::size_t packed(int l, int m) const { return std::size_t(l * (l + 1) / 2 + m); }

  int n_;
  int lmax_;
  std::size_t nphi_ = 1;
  std::size_t ntab_ = 0;  // table entries per polar node
  std::vector<double> polar_;
  std::vector<double> polar_weight_;
  std::vector<double> azimuth_;
  std::vector<double> cos_table_;  // [ip * (lmax+1) + m]
  std::vector<double> sin_table_;
  std::vector<int> degree_;
  std::vector<int> order_;
  Eigen::VectorXd weights_;
  double measure_ = 0.0;

  // Polar tables, [it * ntab_ + q] with q packed (l, |m|) for n = 3 and q = l
  // otherwise.
  std::vector<double> p_, dp_, d2p_, p_over_sin_, mixed_, aa_, zero_;
};

GridPtr make_grid(int n, int lmax);

struct ModeCoeffs {
  GridPtr grid;
  Eigen::VectorXd c;

  static ModeCoeffs zeros(const GridPtr& grid);
};

struct AngularField {
  GridPtr grid;
  Eigen::VectorXd v;

  static AngularField constant(const GridPtr& grid, double value);
};

struct TangentField {
  GridPtr grid;
  Eigen::VectorXd polar;
  Eigen::VectorXd azimuthal;  // zero for n >= 4
};

struct SymTensorField {
  GridPtr grid;
  Eigen::VectorXd pp;  // (theta, theta)
  Eigen::VectorXd pa;  // (theta, phi-hat); zero for n >= 4
  Eigen::VectorXd aa;  // (phi-hat, phi-hat), or each transverse entry

  AngularField trace() const;
  // Pointwise frame norm of the traceless part.
  AngularField traceless_norm() const;
};

void require_same_grid(const GridPtr& a, const GridPtr& b);

ModeCoeffs operator+(const ModeCoeffs& a, const ModeCoeffs& b);
ModeCoeffs operator-(const ModeCoeffs& a, const ModeCoeffs& b);
ModeCoeffs operator*(double s, const ModeCoeffs& a);
AngularField operator+(const AngularField& a, const AngularField& b);
AngularField operator-(const AngularField& a, const AngularField& b);
AngularField operator*(const AngularField& a, const AngularField& b);
AngularField operator*(double s, const AngularField& a);

ModeCoeffs analyze(const AngularField& f);
AngularField synthesize(const ModeCoeffs& c);

ModeCoeffs laplace_beltrami(const ModeCoeffs& c);

enum class ModeSelect { kEqual, kAtMost, kAtLeast };
struct ModeSelector {
  ModeSelect kind;
  int degree;
};
ModeCoeffs project(const ModeCoeffs& c, ModeSelector selector);

TangentField gradient(const ModeCoeffs& c);
AngularField gradient_inner(const TangentField& a, const TangentField& b);
// Pointwise grad f . grad g for bandlimited nodal fields. Throws
// kInsufficientDealiasing when an input is not representable at the grid's lmax.
AngularField gradient_inner(const AngularField& f, const AngularField& g);

SymTensorField covariant_hessian(const ModeCoeffs& c);
SymTensorField covariant_hessian(const AngularField& f);

double integrate(const AngularField& f);
double l2_norm(const AngularField& f);
double sup_norm(const AngularField& f);
double l2_norm(const TangentField& f);
double l2_norm(const SymTensorField& f);
double coeff_norm(const ModeCoeffs& c);

// Zero-mean F with grad F the L2-closest gradient to the covector field.
ModeCoeffs gradient_potential(const TangentField& w);
// Zero-mean G with grad G the L2-closest gradient to div T.
ModeCoeffs divergence_potential(const SymTensorField& t);

// Restriction of the ambient coordinate x^i (1-based) to the sphere. For
// n >= 4 only the axis coordinate i = n is available.
AngularField coordinate_function(const GridPtr& grid, int i);

// Coefficients with i.i.d. standard normal entries on modes of degree
// <= max_degree (clamped to lmax); zero elsewhere.
ModeCoeffs random_bandlimited(const GridPtr& grid, int max_degree, std::mt19937_64& rng);

// f(R^{-1} x) for a rotation R of S^2 (n = 3 only).
ModeCoeffs rotate(const ModeCoeffs& c, const Eigen::Matrix3d& rotation);

// Gram matrix of the n(n+1)/2 quadratics X^i X^j - delta_ij / n (i <= j)
// under the unit-sphere L2 product, computed from exact monomial moments.
Eigen::MatrixXd quadratic_gram(int n);

}  // namespace qsm
