#pragma once

// Inverse mean curvature flow of coordinate spheres and the Minkowski-type
// functionals of a static pair (g, V) evaluated on the slices {r = const}.
//
// Slices between stations are obtained by Lagrange interpolation of the
// stored coefficients in s = log r. The unit-sphere area w is taken from the
// grid quadrature.

#include <optional>
#include <vector>

#include "qsm/metric.hpp"
#include "qsm/sphere_spectral.hpp"

namespace qsm {

// r(t) = r0 e^{t/(n-1)}.
double imcf_radius(double t, double r0, int n);

// Nodal data on the slice {r = const}.
struct SliceData {
  double r = 0.0;
  AngularField u;
  AngularField v;
  AngularField v_r;
};

SliceData slice_data(const QuasiSphericalMetric& g, const PotentialField& v, double r);

// Quadrature integrals over the slice with dsigma = r^{n-1} dsigma_S.
struct SliceIntegrals {
  double r = 0.0;
  double unit_area = 0.0;  // w, the area of the unit sphere
  double area = 0.0;
  double int_h = 0.0;
  double int_vh = 0.0;
  double int_dv_dnu = 0.0;
  double int_v_conformal = 0.0;  // int V^{2(n-1)/(n-2)} dsigma; NaN if V <= 0 somewhere
  double v_spread = 0.0;         // max V - min V on the slice
  double v_min = 0.0;
};

SliceIntegrals slice_integrals(const QuasiSphericalMetric& g, const PotentialField& v, double r);

double smarr_mass(const QuasiSphericalMetric& g, const PotentialField& v, double r);

// The mass defaults to the Smarr mass on the same slice.
double minkowski_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r,
                     std::optional<double> mass = std::nullopt);
double q_functional(const QuasiSphericalMetric& g, const PotentialField& v, double r,
                    std::optional<double> mass = std::nullopt);

// (1/((n-1) w)) (|S|/w)^{(2-n)/(n-1)} int H dsigma - V0. Throws
// kNotEquipotential when V varies by more than 1e-10 on the slice.
double equipotential_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r);

// Static data conformal to a quasi-spherical base: metric factor^{...} g and
// potential, both as per-station nodal fields.
struct ConformalPair {
  QuasiSphericalMetric base;
  std::vector<AngularField> factor;     // multiplies the base metric
  std::vector<AngularField> potential;  // V at each station
};

// (g, V) with unit factor.
ConformalPair conformal_pair(const QuasiSphericalMetric& g, const PotentialField& v);

// (factor, V) -> (factor V^{4/(n-2)}, 1/V). Throws kNonPositivePotential when
// V <= 0 somewhere.
ConformalPair conformal_transform(const ConformalPair& pair);

// Area of the slice at station k in the conformal metric.
double conformal_area(const ConformalPair& pair, std::size_t k);

// (1/((n-1) w)) int V H dsigma - (|S|_{g_-}/w)^{(n-2)/(n-1)} with g_- = V^{4/(n-2)} g.
double conformal_gap(const QuasiSphericalMetric& g, const PotentialField& v, double r);

// |S|^{(3-n)/(n-1)} int R_sigma dsigma for the round slice of radius r.
double einstein_hilbert_round(const GridPtr& grid, double r);

struct FlowSample {
  double t = 0.0;
  double r = 0.0;
  double area = 0.0;
  double int_vh = 0.0;
  double q = 0.0;
  double dq_dt = 0.0;
  double gap = 0.0;
  double umbilic_term = 0.0;  // -|S|^{-(n-2)/(n-1)} int (V/H) |traceless h|^2 dsigma
};

struct FlowTrace {
  int n = 0;
  double m = 0.0;
  bool is_imcf = true;
  bool monotone = true;
  double max_dq_dt = 0.0;
  std::vector<FlowSample> samples;
};

struct QTraceOptions {
  double t_max = 1.0;
  std::size_t samples = 21;
  // Increasing sample times starting at 0; overrides t_max and samples.
  std::vector<double> times;
  // Starting radius; defaults to the innermost station.
  std::optional<double> r0;
  double monotone_tolerance = 1e-9;
  // Evaluate along coordinate spheres of a non-symmetric metric and label the
  // trace as not an IMCF instead of throwing kNotSymmetric.
  bool diagnostic = false;
};

// Sample times placing r(t) on the stations of g from r0 = radius(0) to t_max.
std::vector<double> station_times(const QuasiSphericalMetric& g, double t_max);

// Samples Q along the coordinate IMCF. The mass is the Smarr mass at the
// outermost station.
FlowTrace q_trace(const QuasiSphericalMetric& g, const PotentialField& v,
                  const QTraceOptions& options);

}  // namespace qsm
