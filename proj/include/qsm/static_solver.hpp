#pragma once

// Static potentials on quasi-spherical backgrounds: the Laplace equation
// Delta_g V = 0, the rr/ra/ab components of Hess V = V Ric, the coefficient
// relations of the large-r expansion of V, and the rigidity decomposition.
//
// Laplace equation and rr-component as implemented:
//   u^{-2}(V_rr - u^{-1} u_r V_r + (u/r^2) grad u . grad V) + r^{-2} Lap V
//       + ((n-1)/r) u^{-2} V_r = 0
//   V_rr - u^{-1} u_r V_r + (u/r^2) grad u . grad V = ((n-1)(n-2)/(2 r^2))(1 - u^2) V

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "qsm/asymptotics.hpp"
#include "qsm/metric.hpp"
#include "qsm/sphere_spectral.hpp"

namespace qsm {

// ---------------------------------------------------------------- residuals

struct StaticResidualStation {
  double radius = 0.0;
  AngularField rr;
  TangentField ra;
  SymTensorField ab;
  AngularField ab_trace;
  AngularField laplace;
  double l2_rr = 0.0, l2_ra = 0.0, l2_ab_traceless = 0.0, l2_ab_trace = 0.0, l2_laplace = 0.0;
  double sup_rr = 0.0, sup_laplace = 0.0;
};

struct StaticResidual {
  std::vector<StaticResidualStation> stations;
  FitWindow audit_window;
  double max_rr = 0.0, max_ra = 0.0, max_ab_traceless = 0.0, max_ab_trace = 0.0,
         max_laplace = 0.0;
  double aggregate = 0.0;  // max of the component L2 norms over the audit window
};

constexpr FitWindow kWholeRange{0.0, std::numeric_limits<double>::infinity()};

StaticResidual static_residual(const QuasiSphericalMetric& g, const PotentialField& v,
                               FitWindow audit = kWholeRange);

// ------------------------------------------------------ symmetric potential

struct SymmetricPotential {
  PotentialField potential;
  std::vector<double> wronskian;         // V (1/u)' - (1/u) V'
  std::vector<double> scaled_wronskian;  // u^{-1} W
  double max_scaled_wronskian = 0.0;
  double drift_per_decade = 0.0;  // largest |change of u^{-1} W| per decade in r
};

// Integrates V_rr - u^{-1} u_r V_r = ((n-1)(n-2)/(2 r^2))(1 - u^2) V inward
// from the outermost station, starting on the bounded branch V -> 1.
SymmetricPotential solve_potential_symmetric(const QuasiSphericalMetric& g,
                                             double substeps_per_interval = 8);

// ------------------------------------------------------------- Laplace solve

enum class InnerCondition { kDirichlet, kNeumann };
// Outer Robin rows W_s + rho_l W = 0. kBounded: rho_0 from the fitted mass,
// rho_l = n - 2 + l. kGrowing: rho_0 = 0 and rho_1 = -1 admit the constant
// and coordinate-function growth; l >= 2 stay decaying.
enum class OuterClosure { kBounded, kGrowing };

struct PotentialProblem {
  InnerCondition inner = InnerCondition::kDirichlet;
  ModeCoeffs inner_data;  // V (Dirichlet) or V_r (Neumann) at the innermost station
  OuterClosure outer = OuterClosure::kBounded;
  int stencil_width = 9;
  double audit_tolerance = 1e-6;  // scalar-flat check on the background
};

PotentialField solve_potential(const QuasiSphericalMetric& g, const PotentialProblem& problem);

// Factored discrete Laplace operator for repeated solves on one background.
class LaplaceSolver {
 public:
  LaplaceSolver(const QuasiSphericalMetric& g, InnerCondition inner, OuterClosure outer,
                int stencil_width = 9);
  ~LaplaceSolver();
  LaplaceSolver(const LaplaceSolver&) = delete;
  LaplaceSolver& operator=(const LaplaceSolver&) = delete;

  // Full potential for the given inner data.
  PotentialField solve(const ModeCoeffs& inner_data) const;
  // Deviation W = V - 1 and its s-derivatives for the inner data of W.
  void solve_deviation(const Eigen::VectorXd& inner_w, std::vector<ModeCoeffs>* w,
                       std::vector<ModeCoeffs>* w_r, std::vector<ModeCoeffs>* w_rr) const;
  std::size_t num_unknowns() const;

 private:
  struct Impl;
  Impl* impl_;
};

// ------------------------------------------------------------ rr potential

struct RadialPotentialOptions {
  int max_iterations = 400;
  double tolerance = 1e-15;
};

// V solving the rr-component with V -> 1, V_r -> 0 at infinity, by fixed-point
// iteration of V = 1 + int_r^inf (t - r) T[V](t) dt node by node.
PotentialField integrate_rr_potential(const QuasiSphericalMetric& g,
                                      const RadialPotentialOptions& options = {});

// ------------------------------------------------------- expansion of V

struct PotentialExpansionReport {
  ExpansionReport lapse;
  ExpansionReport potential;
  double mass = 0.0;              // from the lapse fit
  double leading_gap = 0.0;       // potential.leading + m
  double quadratic_gap = 0.0;     // potential.quadratic + m^2 / 2
  double quadratic_relative = 0.0;
  double vdot_gap = 0.0;          // |Vdot + ((n-2)/n) udot| / |udot|
  double vhat_gap = 0.0;          // n = 3: |Vhat + uhat / 10| / |uhat|; n >= 4 with its factor
  double vtriple_gap_alternative = 0.0;    // n >= 4: against the alternative l = 2 coefficient
  double vtriple_gap_rederived = 0.0;  // n >= 4: against the rederived formula
  ModeCoeffs vtriple_alternative, vtriple_rederived;
};

// Coefficient of uhat in Vhat: -1/10 (n = 3), -(n-1)(n-2)/(p(p+1)), p = n + 2/(n-1).
double potential_hat_factor(int n);

PotentialExpansionReport potential_expansion(const QuasiSphericalMetric& g,
                                             const PotentialField& v, FitWindow window,
                                             const FitOptions& options = {});

// --------------------------------------------------------- rigidity probe

struct ProbeOptions {
  std::size_t inner_skip = 4;  // stations excluded next to each boundary
  std::size_t outer_skip = 4;
  int stencil_width = 9;
  double audit_tolerance = 1e-6;
};

struct ProbeResult {
  double defect = 0.0;     // RMS over the window of the scaled residual at the optimum
  double aggregate = 0.0;  // static_residual aggregate at the optimum
  ModeCoeffs inner_data;   // optimal V at the innermost station
  PotentialField best;
  std::size_t parameters = 0;
  double condition = 0.0;
};

ProbeResult rigidity_probe(const QuasiSphericalMetric& g, const ProbeOptions& options = {});

// ------------------------------------------------- defect decomposition

struct DefectStation {
  double radius = 0.0;
  ModeCoeffs u_breve, v_breve;  // zero-mean parts
  ModeCoeffs f, g, i;           // F, G, I
  double a = 0.0;               // mean of r u^{-2} V_r
  AngularField ode_residual;    // r u_r_breve + (n-1) u_breve - (F + G/(n-2) + I)
  double f_curl = 0.0;          // non-gradient remainder of the F right side
  double g_curl = 0.0;
  double ode_l2 = 0.0;
  double u_breve_l2 = 0.0;
};

struct DefectDecomposition {
  std::vector<DefectStation> stations;
  double max_curl = 0.0;
};

DefectDecomposition defect_decomposition(const QuasiSphericalMetric& g, const PotentialField& v,
                                         double curl_tolerance = 1e-6);

}  // namespace qsm
