#pragma once

// Quasi-spherical metrics g = u^2 dr^2 + r^2 g_{S^{n-1}} and static potentials
// sampled on radial stations, with the curvature of g in polar coordinates.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "qsm/sphere_spectral.hpp"

namespace qsm {

// Radial profile data shared by the metric and the potential: per-station
// coefficients of f - 1, its first r-derivative and optionally the second.
// Missing derivatives are differenced with 5-point stencils in s = log r.
class RadialFieldStack {
 public:
  RadialFieldStack() = default;
  RadialFieldStack(GridPtr grid, std::vector<double> radii, std::vector<ModeCoeffs> deviation,
                   std::vector<ModeCoeffs> first = {}, std::vector<ModeCoeffs> second = {});

  const GridPtr& grid() const { return grid_; }
  const std::vector<double>& radii() const { return radii_; }
  std::size_t num_stations() const { return radii_.size(); }
  double radius(std::size_t k) const;

  const ModeCoeffs& deviation(std::size_t k) const;
  const AngularField& value(std::size_t k) const;
  bool has_stored_first() const { return stored_first_; }
  bool has_stored_second() const { return stored_second_; }
  const ModeCoeffs& first_coeffs(std::size_t k) const;
  const AngularField& first(std::size_t k) const;
  const ModeCoeffs& second_coeffs(std::size_t k) const;
  const AngularField& second(std::size_t k) const;

 private:
  void check_station(std::size_t k) const;
  void ensure_differenced(std::size_t order) const;

  GridPtr grid_;
  std::vector<double> radii_;
  std::vector<ModeCoeffs> dev_;
  std::vector<AngularField> val_;
  bool stored_first_ = false;
  bool stored_second_ = false;
  mutable std::vector<ModeCoeffs> d1_, d2_;
  mutable std::vector<AngularField> d1v_, d2v_;
};

// Differences per-station coefficients in s = log r and returns d/dr.
std::vector<ModeCoeffs> radial_derivative(const std::vector<double>& radii,
                                          const std::vector<ModeCoeffs>& f, int width = 5);

class QuasiSphericalMetric {
 public:
  QuasiSphericalMetric(GridPtr grid, std::vector<double> radii,
                       std::vector<ModeCoeffs> lapse_deviation,
                       std::vector<ModeCoeffs> lapse_r = {});
  static QuasiSphericalMetric from_nodal(GridPtr grid, std::vector<double> radii,
                                         const std::vector<AngularField>& lapse,
                                         const std::vector<AngularField>& lapse_r = {});

  int dim() const { return stack_.grid()->dim(); }
  const GridPtr& grid() const { return stack_.grid(); }
  const std::vector<double>& radii() const { return stack_.radii(); }
  std::size_t num_stations() const { return stack_.num_stations(); }
  double radius(std::size_t k) const { return stack_.radius(k); }

  const ModeCoeffs& lapse_deviation(std::size_t k) const { return stack_.deviation(k); }
  const AngularField& lapse(std::size_t k) const { return stack_.value(k); }
  bool has_stored_lapse_r() const { return stack_.has_stored_first(); }
  const ModeCoeffs& lapse_r_coeffs(std::size_t k) const { return stack_.first_coeffs(k); }
  const AngularField& lapse_r(std::size_t k) const { return stack_.first(k); }

  // Largest coefficient norm of the l >= 1 part over all stations.
  double asymmetry() const;

 private:
  RadialFieldStack stack_;
};

struct PotentialMetadata {
  std::string inner_condition = "closed-form";
  std::string outer_closure = "none";
  double outer_radius = 0.0;
};

class PotentialField {
 public:
  PotentialField(GridPtr grid, std::vector<double> radii, std::vector<ModeCoeffs> deviation,
                 std::vector<ModeCoeffs> v_r = {}, std::vector<ModeCoeffs> v_rr = {},
                 PotentialMetadata meta = {});
  static PotentialField from_nodal(GridPtr grid, std::vector<double> radii,
                                   const std::vector<AngularField>& v,
                                   const std::vector<AngularField>& v_r = {},
                                   const std::vector<AngularField>& v_rr = {},
                                   PotentialMetadata meta = {});

  const GridPtr& grid() const { return stack_.grid(); }
  const std::vector<double>& radii() const { return stack_.radii(); }
  std::size_t num_stations() const { return stack_.num_stations(); }
  double radius(std::size_t k) const { return stack_.radius(k); }

  const ModeCoeffs& deviation(std::size_t k) const { return stack_.deviation(k); }
  const AngularField& value(std::size_t k) const { return stack_.value(k); }
  const ModeCoeffs& radial_coeffs(std::size_t k) const { return stack_.first_coeffs(k); }
  const AngularField& radial(std::size_t k) const { return stack_.first(k); }
  const ModeCoeffs& radial2_coeffs(std::size_t k) const { return stack_.second_coeffs(k); }
  const AngularField& radial2(std::size_t k) const { return stack_.second(k); }
  bool has_stored_radial() const { return stack_.has_stored_first(); }
  bool has_stored_radial2() const { return stack_.has_stored_second(); }

  const PotentialMetadata& metadata() const { return meta_; }
  void set_metadata(PotentialMetadata meta) { meta_ = std::move(meta); }

 private:
  RadialFieldStack stack_;
  PotentialMetadata meta_;
};

void require_compatible(const QuasiSphericalMetric& g, const PotentialField& v);

struct StaticPair {
  QuasiSphericalMetric metric;
  PotentialField potential;
};

// u = (1 - 2 m r^{2-n})^{-1/2}, V = (1 - 2 m r^{2-n})^{1/2} with exact radial
// derivatives. Requires r0^{n-2} > 2m strictly.
StaticPair schwarzschild(const GridPtr& grid, double m, const std::vector<double>& radii);

// Closed-form Schwarzschild lapse and its r-derivative.
double schwarzschild_lapse(int n, double m, double r);
double schwarzschild_lapse_r(int n, double m, double r);

// u^2 Lap u - (n-1) r u_r + ((n-1)(n-2)/2)(u - u^3) at station k.
AngularField scalar_residual(const QuasiSphericalMetric& g, std::size_t k);
std::vector<AngularField> scalar_residual(const QuasiSphericalMetric& g);

// Ricci components in the frame (nu, sigma-orthonormal e_a). R(d_a, d_b)
// is reported with sigma_ab -> delta_ab, R(d_a, nu) per unit sigma-length.
struct CurvatureEntry {
  double radius = 0.0;
  SymTensorField ric_ab;
  TangentField ric_a_nu;
  AngularField ric_nu_nu;
  AngularField scalar;             // r^{-2} tr_sigma R_ab + R(nu, nu)
  AngularField scalar_from_lapse;  // -2 E / (r^2 u^3) with E the scalar residual
  double sup_ab = 0.0, l2_ab = 0.0;
  double sup_a_nu = 0.0, l2_a_nu = 0.0;
  double sup_nu_nu = 0.0, l2_nu_nu = 0.0;
  double sup_scalar = 0.0, l2_scalar = 0.0;
};

CurvatureEntry ricci_components(const QuasiSphericalMetric& g, std::size_t k);

struct CurvatureReport {
  std::vector<CurvatureEntry> stations;
  double max_trace_mismatch = 0.0;
};

CurvatureReport curvature_report(const QuasiSphericalMetric& g);

struct SphereGeometry {
  AngularField mean_curvature;
  double area = 0.0;
  bool umbilic = true;
};

SphereGeometry sphere_geometry(const QuasiSphericalMetric& g, std::size_t k);

}  // namespace qsm
