#pragma once

// Outward integration of the zero scalar curvature equation
//   (n-1) u_s = u^2 Lap u + ((n-1)(n-2)/2)(u - u^3),  s = log r,
// by explicit RK4 on the spectral coefficients of u - 1.

#include <cstddef>
#include <vector>

#include "qsm/metric.hpp"
#include "qsm/sphere_spectral.hpp"

namespace qsm {

struct EvolveParams {
  double r0 = 1.0;
  double r_max = 100.0;
  double safety = 0.4;
  double max_step = 0.05;          // in s = log r
  double min_step = 1e-12;         // step underflow threshold
  std::size_t snapshot_count = 64;  // log-spaced, including r0 and r_max
  std::vector<double> snapshot_radii;  // explicit list; overrides snapshot_count
  double u_floor = 0.05;
  double u_ceiling = 20.0;
  double audit_tolerance = 1e-8;

  void validate() const;
  std::vector<double> snapshots() const;
};

// Largest stable step in s for the current lapse.
double stable_step(int n, int lmax, double u_max, double safety);

// Evolves lapse data given at r0. The returned metric stores u - 1 and the
// PDE-consistent u_r at every snapshot radius.
QuasiSphericalMetric evolve(const AngularField& u_init, const EvolveParams& params);
QuasiSphericalMetric evolve(const ModeCoeffs& deviation_init, const EvolveParams& params);

// Right-hand side u_s of the evolution for coefficients of u - 1.
ModeCoeffs evolution_rhs(const ModeCoeffs& deviation);

// Mass parameter m0 = r0^{n-2} (1 - u0^{-2}) / 2 of the symmetric solution.
double symmetric_mass(int n, double r0, double u0);

struct SymmetricProfile {
  int n = 3;
  double m0 = 0.0;
  std::vector<double> radii;
  std::vector<double> closed_form;
  std::vector<double> ode;
  double max_difference = 0.0;
};

// Closed form u = (1 - 2 m0 r^{2-n})^{-1/2} next to an independent RK4
// integration of (n-1) u_s = c (u - u^3).
SymmetricProfile evolve_symmetric(double u0, int n, const std::vector<double>& radii,
                                  double step = 1e-3);

struct ResidualReport {
  std::vector<double> radii;
  std::vector<double> sup;
  std::vector<double> l2;
  double max_sup = 0.0;
  double max_l2 = 0.0;
  std::size_t worst_station = 0;
};

ResidualReport residual_report(const QuasiSphericalMetric& g);

}  // namespace qsm
