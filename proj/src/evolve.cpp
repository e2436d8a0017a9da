#include "qsm/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsm/error.hpp"
#include "qsm/radial.hpp"

namespace qsm {

void EvolveParams::validate() const {
  if (!(r0 > 0.0) || !(r_max > r0)) {
    throw Error(ErrorCode::kInvalidArgument, "evolution needs 0 < r0 < r_max");
  }
  if (!(safety > 0.0 && safety < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "safety factor must lie in (0, 1)");
  }
  if (!(max_step > 0.0) || !(min_step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step bounds must be positive");
  }
  if (!(u_floor >= 0.0 && u_ceiling > u_floor)) {
    throw Error(ErrorCode::kInvalidArgument, "guard bounds must satisfy 0 <= floor < ceiling");
  }
  if (snapshot_radii.empty() && snapshot_count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two snapshots");
  }
}

std::vector<double> EvolveParams::snapshots() const {
  if (snapshot_radii.empty()) return log_spaced(r0, r_max, snapshot_count);
  std::vector<double> out = snapshot_radii;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.front() < r0 || out.back() > r_max) {
    throw Error(ErrorCode::kInvalidArgument, "snapshot radii must lie in [r0, r_max]");
  }
  if (out.front() != r0) out.insert(out.begin(), r0);
  return out;
}

double stable_step(int n, int lmax, double u_max, double safety) {
  const double lam = double(lmax) * (lmax + n - 2);
  return safety * (n - 1) / (u_max * u_max * lam);
}

ModeCoeffs evolution_rhs(const ModeCoeffs& deviation) {
  const SphereGrid& g = *deviation.grid;
  const int n = g.dim();
  const double c = 0.5 * (n - 1) * (n - 2);
  const Eigen::ArrayXd w = g.synthesize(deviation.c, Component::kValue).array();
  const Eigen::ArrayXd lap = g.synthesize(laplace_beltrami(deviation).c, Component::kValue).array();
  const Eigen::ArrayXd u = 1.0 + w;
  // u - u^3 = -w (1 + w)(2 + w).
  const Eigen::ArrayXd rhs = (u * u * lap - c * w * u * (2.0 + w)) / double(n - 1);
  return ModeCoeffs{deviation.grid, g.analyze(rhs.matrix(), Component::kValue)};
}

namespace {

void check_guard(const ModeCoeffs& w, const EvolveParams& p, double r, double* umax) {
  const Eigen::VectorXd u = w.grid->synthesize(w.c, Component::kValue).array() + 1.0;
  const double lo = u.minCoeff();
  const double hi = u.maxCoeff();
  if (!(lo > p.u_floor) || !(hi < p.u_ceiling)) {
    std::ostringstream msg;
    msg << "lapse left the guard interval (" << p.u_floor << ", " << p.u_ceiling << ") at r="
        << r << " (min " << lo << ", max " << hi << ")";
    throw Error(ErrorCode::kBlowUpGuard, msg.str());
  }
  *umax = hi;
}

}  // namespace

QuasiSphericalMetric evolve(const AngularField& u_init, const EvolveParams& params) {
  const double umin = u_init.v.minCoeff();
  if (!(umin > 0.0)) {
    throw Error(ErrorCode::kNonPositiveLapse,
                "initial lapse must be positive (min " + std::to_string(umin) + ")");
  }
  return evolve(analyze(AngularField{u_init.grid, u_init.v.array() - 1.0}), params);
}

QuasiSphericalMetric evolve(const ModeCoeffs& deviation_init, const EvolveParams& params) {
  params.validate();
  const GridPtr& grid = deviation_init.grid;
  const int n = grid->dim();
  const int lmax = grid->lmax();
  {
    const Eigen::VectorXd u0 = grid->synthesize(deviation_init.c, Component::kValue).array() + 1.0;
    if (!(u0.minCoeff() > 0.0)) {
      throw Error(ErrorCode::kNonPositiveLapse, "initial lapse must be positive");
    }
  }
  const std::vector<double> snaps = params.snapshots();

  std::vector<ModeCoeffs> dev, dev_r;
  ModeCoeffs w = deviation_init;
  double s = std::log(params.r0);
  double umax = 0.0;
  check_guard(w, params, params.r0, &umax);

  for (double target_r : snaps) {
    const double target = std::log(target_r);
    while (s < target) {
      double h = std::min(params.max_step, stable_step(n, lmax, umax, params.safety));
      if (h < params.min_step) {
        throw Error(ErrorCode::kStepUnderflow,
                    "step size " + std::to_string(h) + " underflowed at r=" +
                        std::to_string(std::exp(s)));
      }
      bool last = false;
      if (s + h >= target) {
        h = target - s;
        last = true;
      }
      const ModeCoeffs k1 = evolution_rhs(w);
      const ModeCoeffs k2 = evolution_rhs(ModeCoeffs{grid, w.c + 0.5 * h * k1.c});
      const ModeCoeffs k3 = evolution_rhs(ModeCoeffs{grid, w.c + 0.5 * h * k2.c});
      const ModeCoeffs k4 = evolution_rhs(ModeCoeffs{grid, w.c + h * k3.c});
      w.c += (h / 6.0) * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
      s = last ? target : s + h;
      check_guard(w, params, std::exp(s), &umax);
    }
    const ModeCoeffs ws = evolution_rhs(w);
    dev.push_back(w);
    dev_r.push_back(ModeCoeffs{grid, ws.c / target_r});
  }
  return QuasiSphericalMetric(grid, snaps, std::move(dev), std::move(dev_r));
}

double symmetric_mass(int n, double r0, double u0) {
  if (!(u0 > 0.0)) throw Error(ErrorCode::kNonPositiveLapse, "u0 must be positive");
  return 0.5 * std::pow(r0, n - 2) * (1.0 - 1.0 / (u0 * u0));
}

SymmetricProfile evolve_symmetric(double u0, int n, const std::vector<double>& radii,
                                  double step) {
  if (n < kMinDimension || n > kMaxDimension) {
    throw Error(ErrorCode::kUnsupportedDimension, "dimension outside [3, 8]");
  }
  if (radii.empty()) throw Error(ErrorCode::kInvalidArgument, "no radii given");
  if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ODE step must be positive");
  SymmetricProfile out;
  out.n = n;
  out.radii = radii;
  out.m0 = symmetric_mass(n, radii.front(), u0);
  const double c = 0.5 * (n - 1) * (n - 2);
  auto f = [&](double u) { return c * (u - u * u * u) / (n - 1); };
  double u = u0;
  double s = std::log(radii.front());
  for (double r : radii) {
    const double target = std::log(r);
    while (s < target) {
      const double h = std::min(step, target - s);
      const double k1 = f(u);
      const double k2 = f(u + 0.5 * h * k1);
      const double k3 = f(u + 0.5 * h * k2);
      const double k4 = f(u + h * k3);
      u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      s = (s + h >= target) ? target : s + h;
    }
    out.ode.push_back(u);
    out.closed_form.push_back(1.0 / std::sqrt(1.0 - 2.0 * out.m0 * std::pow(r, 2 - n)));
    out.max_difference = std::max(out.max_difference, std::abs(u - out.closed_form.back()));
  }
  return out;
}

ResidualReport residual_report(const QuasiSphericalMetric& g) {
  ResidualReport rep;
  for (std::size_t k = 0; k < g.num_stations(); ++k) {
    const AngularField res = scalar_residual(g, k);
    rep.radii.push_back(g.radius(k));
    rep.sup.push_back(sup_norm(res));
    rep.l2.push_back(l2_norm(res));
    if (rep.sup.back() > rep.max_sup) {
      rep.max_sup = rep.sup.back();
      rep.worst_station = k;
    }
    rep.max_l2 = std::max(rep.max_l2, rep.l2.back());
  }
  return rep;
}

}  // namespace qsm
