#pragma once

// Least-squares fits of large-r expansions of the lapse (and, through the
// same machinery, the potential) mode by mode.

#include <cstddef>
#include <string>
#include <vector>

#include "qsm/metric.hpp"
#include "qsm/sphere_spectral.hpp"

namespace qsm {

// One basis function r^power (log r)^log_power.
struct PowerTerm {
  double power = 0.0;
  int log_power = 0;

  double operator()(double r) const;
  std::string label() const;
};

struct CurveFit {
  std::vector<PowerTerm> terms;
  Eigen::MatrixXd coeffs;     // terms x curves
  Eigen::VectorXd residual;   // weighted relative residual per curve
  Eigen::VectorXd amplitude;  // weighted data norm per curve
  double condition = 0.0;     // of the column-scaled weighted design matrix
  std::size_t rows = 0;
};

// Fits each column of y (rows follow r) against the terms. Rows are weighted
// by r^{-lead_power} so every station counts in relative terms; columns are
// scaled to unit norm before a column-pivoted QR solve.
CurveFit fit_curves(const std::vector<double>& r, const Eigen::MatrixXd& y,
                    const std::vector<PowerTerm>& terms, double lead_power);

struct FitWindow {
  double r_min = 0.0;
  double r_max = 0.0;
};

struct FitOptions {
  double near_field_factor = 50.0;  // window must start at or beyond this * r0
  std::size_t min_stations = 8;
};

struct DegreeFit {
  int degree = 0;
  std::vector<std::size_t> modes;  // coefficient indices of this degree
  CurveFit fit;
};

// Coefficients are per-mode coefficient vectors in the orthonormal basis.
// Scalars (leading, quadratic) are divided by sqrt|S^{n-1}| so they are the
// plain coefficients of the spherical mean.
struct ExpansionReport {
  int n = 3;
  FitWindow window;
  std::size_t stations = 0;
  double leading = 0.0;    // coefficient of r^{2-n} in the mean (m for u, -m for V)
  double quadratic = 0.0;  // coefficient of r^{4-2n} in the mean
  ModeCoeffs dot;          // l = 1 part at r^{1-n}
  ModeCoeffs ddot;         // n = 3 only: l <= 1 part at r^{-3}
  ModeCoeffs hat;          // n = 3: l <= 2 at r^{-4} log r; n >= 4: l = 2 at r^{-n-2/(n-1)}
  ModeCoeffs triple;       // n = 3: l <= 2 at r^{-4}; n >= 4: l = 2 at r^{2-2n}
  double higher_mode_bound = 0.0;  // largest l >= 3 coefficient of the bounding term
  double max_condition = 0.0;
  double max_residual = 0.0;
  std::vector<DegreeFit> fits;
};

// Basis per degree for the given dimension.
std::vector<PowerTerm> expansion_basis(int n, int degree);

// Core fit over per-station coefficient vectors of f - 1.
ExpansionReport fit_expansion(const std::vector<double>& radii,
                              const std::vector<ModeCoeffs>& deviation, FitWindow window,
                              const FitOptions& options = {});

ExpansionReport fit_expansion_3d(const QuasiSphericalMetric& g, FitWindow window,
                                 const FitOptions& options = {});
ExpansionReport fit_expansion_highdim(const QuasiSphericalMetric& g, FitWindow window,
                                      const FitOptions& options = {});

// (a^2)_{l=2} for a coefficient vector a.
ModeCoeffs square_l2(const ModeCoeffs& a);

struct L2RelationReport {
  ModeCoeffs measured;   // u_hat_{l=2} (n = 3) or u_triple_{l=2} (n >= 4)
  ModeCoeffs predicted;  // -(7/2)(udot^2)_{l=2} or C_n (udot^2)_{l=2}
  double gap = 0.0;                 // coefficient norm of measured - predicted
  double relative_to_udot = 0.0;    // gap / |udot|^2
  double relative_to_prediction = 0.0;
  double factor = 0.0;              // -7/2 or C_n
};

// C_n = ((3/2)(n-1)(n-2) + 2(n-1)) / (n(n-3)) for n >= 4.
double forced_l2_factor(int n);

L2RelationReport check_l2_relation(const ExpansionReport& rep);

// Least-squares slope of log|y| against log r.
double loglog_slope(const std::vector<double>& r, const std::vector<double>& y);

// Amplitude history of a single mode index over the stations.
std::vector<double> mode_history(const QuasiSphericalMetric& g, std::size_t mode);

// Log-log slopes of the l = 1 and l = 2 amplitudes over the report window
// (n >= 4, axisymmetric). The l = 2 amplitude is dominated by the free
// r^{-n-2/(n-1)} term; the forced slope is taken after subtracting the
// fitted free term.
struct ExponentReport {
  double slope_l1 = 0.0;
  double slope_l2_free = 0.0;
  double slope_l2_forced = 0.0;
  double expected_l1 = 0.0;
  double expected_l2_free = 0.0;
  double expected_l2_forced = 0.0;
};

ExponentReport measure_exponents(const QuasiSphericalMetric& g, const ExpansionReport& rep);

}  // namespace qsm
