#include "qsm/verify.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "qsm/asymptotics.hpp"
#include "qsm/error.hpp"
#include "qsm/evolve.hpp"
#include "qsm/imcf.hpp"
#include "qsm/metric.hpp"
#include "qsm/radial.hpp"
#include "qsm/sphere_spectral.hpp"
#include "qsm/static_solver.hpp"

namespace qsm {

namespace {

struct CheckDef {
  const char* name;
  double tolerance;
  bool scaled;
  std::function<double(std::mt19937_64&)> run;
};

double random_mass(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(-0.5, 1.0)(rng);
}

StaticPair random_schwarzschild(int n, std::mt19937_64& rng, std::size_t stations = 80,
                                int lmax = 6) {
  return schwarzschild(make_grid(n, lmax), random_mass(rng), log_spaced(3.0, 60.0, stations));
}

double spectral_round_trip(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    GridPtr g = make_grid(n, 8);
    for (int trial = 0; trial < 10; ++trial) {
      const ModeCoeffs c = random_bandlimited(g, 8, rng);
      worst = std::max(worst, (analyze(synthesize(c)).c - c.c).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double spectral_parseval(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    GridPtr g = make_grid(n, 8);
    for (int trial = 0; trial < 10; ++trial) {
      const ModeCoeffs c = random_bandlimited(g, 8, rng);
      const AngularField f = synthesize(c);
      const double energy = c.c.squaredNorm();
      worst = std::max(worst, std::abs(integrate(f * f) - energy) / energy);
    }
  }
  return worst;
}

double spectral_gradient_product(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    GridPtr g = make_grid(n, 6);
    for (int trial = 0; trial < 100; ++trial) {
      const AngularField f = synthesize(random_bandlimited(g, 1, rng));
      const AngularField h = synthesize(random_bandlimited(g, 1, rng));
      const ModeCoeffs lhs = project(analyze(gradient_inner(f, h)), {ModeSelect::kEqual, 2});
      const ModeCoeffs rhs = project(analyze(f * h), {ModeSelect::kEqual, 2});
      worst = std::max(worst, coeff_norm(lhs + rhs));
    }
  }
  return worst;
}

double spectral_trace_characterization(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    GridPtr g = make_grid(n, 8);
    for (int trial = 0; trial < 100; ++trial) {
      const ModeCoeffs low = random_bandlimited(g, 1, rng);
      const SymTensorField h = covariant_hessian(low);
      worst = std::max(worst, l2_norm(h.traceless_norm()));
      worst = std::max(
          worst, (h.trace().v - synthesize(laplace_beltrami(low)).v).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double spectral_quadratic_rank(std::mt19937_64&) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(quadratic_gram(n));
    lu.setThreshold(1e-10);
    worst = std::max(worst, std::abs(double(lu.rank() - (n * (n + 1) / 2 - 1))));
  }
  return worst;
}

double metric_schwarzschild_residual(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    const StaticPair p = random_schwarzschild(n, rng, 30);
    for (const AngularField& e : scalar_residual(p.metric)) worst = std::max(worst, sup_norm(e));
  }
  return worst;
}

double evolve_schwarzschild(std::mt19937_64& rng) {
  const double m = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  GridPtr g = make_grid(3, kMinLmax);
  EvolveParams p;
  p.r0 = 2.0;
  p.r_max = 20.0;
  p.snapshot_count = 10;
  ModeCoeffs dev = ModeCoeffs::zeros(g);
  dev.c[0] = (schwarzschild_lapse(3, m, p.r0) - 1.0) * std::sqrt(g->measure());
  const QuasiSphericalMetric out = evolve(dev, p);
  double worst = 0.0;
  for (std::size_t k = 0; k < out.num_stations(); ++k) {
    const double exact = schwarzschild_lapse(3, m, out.radius(k));
    worst = std::max(worst, (out.lapse(k).v.array() - exact).abs().maxCoeff());
  }
  return worst;
}

double asymptotics_schwarzschild_mass(std::mt19937_64& rng) {
  const double m = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
  const StaticPair p = schwarzschild(make_grid(3, kMinLmax), m, log_spaced(2.0, 1000.0, 120));
  const ExpansionReport rep = fit_expansion_3d(p.metric, FitWindow{100.0, 1000.0});
  return std::abs(rep.leading - m);
}

double static_schwarzschild_pairs(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    const StaticPair p = random_schwarzschild(n, rng, 30);
    worst = std::max(worst, static_residual(p.metric, p.potential).aggregate);
  }
  return worst;
}

double static_flat_coordinate_pair(std::mt19937_64&) {
  double worst = 0.0;
  for (int n = kMinDimension; n <= kMaxDimension; ++n) {
    GridPtr g = make_grid(n, 6);
    const std::vector<double> radii = log_spaced(1.0, 10.0, 20);
    const AngularField x = coordinate_function(g, n);
    std::vector<AngularField> u, v, v_r, v_rr;
    for (double r : radii) {
      u.push_back(AngularField::constant(g, 1.0));
      v.push_back(r * x);
      v_r.push_back(x);
      v_rr.push_back(AngularField::constant(g, 0.0));
    }
    const QuasiSphericalMetric metric = QuasiSphericalMetric::from_nodal(g, radii, u, v_rr);
    const PotentialField pot = PotentialField::from_nodal(g, radii, v, v_r, v_rr);
    worst = std::max(worst, static_residual(metric, pot).aggregate);
  }
  return worst;
}

double static_wronskian(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n : {3, 5}) {
    const StaticPair p = random_schwarzschild(n, rng, 120);
    worst = std::max(worst, solve_potential_symmetric(p.metric).max_scaled_wronskian);
  }
  return worst;
}

template <typename F>
double over_schwarzschild_slices(std::mt19937_64& rng, F f) {
  double worst = 0.0;
  for (int n = 3; n <= 5; ++n) {
    for (double m : {-0.5, 0.0, 1.0}) {
      const StaticPair p = schwarzschild(make_grid(n, 6), m, log_spaced(3.0, 60.0, 200));
      const double r = std::uniform_real_distribution<double>(3.0, 60.0)(rng);
      worst = std::max(worst, std::abs(f(p, r)));
    }
  }
  return worst;
}

double imcf_minkowski_gap(std::mt19937_64& rng) {
  return over_schwarzschild_slices(rng, [](const StaticPair& p, double r) {
    return minkowski_gap(p.metric, p.potential, r);
  });
}

double imcf_q_constant(std::mt19937_64& rng) {
  const double t_max = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  double worst = 0.0;
  for (int n = 3; n <= 5; ++n) {
    const double w = unit_sphere_area(n - 1);
    const double target = double(n - 1) * std::pow(w, 1.0 / double(n - 1));
    for (double m : {-0.5, 0.0, 1.0}) {
      const StaticPair p = schwarzschild(make_grid(n, 6), m, log_spaced(3.0, 60.0, 200));
      QTraceOptions o;
      o.t_max = t_max;
      o.samples = 11;
      for (const FlowSample& s : q_trace(p.metric, p.potential, o).samples) {
        worst = std::max(worst, std::abs(s.q - target));
      }
    }
  }
  return worst;
}

double imcf_smarr_independence(std::mt19937_64& rng) {
  return over_schwarzschild_slices(rng, [](const StaticPair& p, double r) {
    return smarr_mass(p.metric, p.potential, r) - smarr_mass(p.metric, p.potential, 0.5 * r + 30.0);
  });
}

double imcf_equipotential_gap(std::mt19937_64& rng) {
  return over_schwarzschild_slices(rng, [](const StaticPair& p, double r) {
    return equipotential_gap(p.metric, p.potential, r);
  });
}

double imcf_conformal_gap(std::mt19937_64& rng) {
  return over_schwarzschild_slices(rng, [](const StaticPair& p, double r) {
    return conformal_gap(p.metric, p.potential, r);
  });
}

double imcf_conformal_involution(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n : {3, 4, 6}) {
    GridPtr g = make_grid(n, 6);
    const std::vector<double> radii = log_spaced(2.0, 10.0, 6);
    std::vector<AngularField> u, v;
    for (std::size_t k = 0; k < radii.size(); ++k) {
      AngularField a = synthesize(0.05 * random_bandlimited(g, 3, rng));
      AngularField b = synthesize(0.1 * random_bandlimited(g, 4, rng));
      a.v.array() += 1.0;
      b.v.array() += 1.0;
      u.push_back(a);
      v.push_back(b);
    }
    const QuasiSphericalMetric metric = QuasiSphericalMetric::from_nodal(g, radii, u);
    const PotentialField pot = PotentialField::from_nodal(g, radii, v);
    const ConformalPair twice = conformal_transform(conformal_transform(conformal_pair(metric, pot)));
    for (std::size_t k = 0; k < radii.size(); ++k) {
      worst = std::max(worst, (twice.factor[k].v.array() - 1.0).abs().maxCoeff());
      worst = std::max(worst, (twice.potential[k].v - v[k].v).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

const std::vector<CheckDef>& suite() {
  static const std::vector<CheckDef> defs = {
      {"spectral.round_trip", 1e-12, true, spectral_round_trip},
      {"spectral.parseval", 1e-10, true, spectral_parseval},
      {"spectral.gradient_product", 1e-10, true, spectral_gradient_product},
      {"spectral.trace_characterization", 1e-10, true, spectral_trace_characterization},
      {"spectral.quadratic_rank", 0.5, false, spectral_quadratic_rank},
      {"metric.schwarzschild_residual", 1e-8, true, metric_schwarzschild_residual},
      {"evolve.schwarzschild", 1e-6, true, evolve_schwarzschild},
      {"asymptotics.schwarzschild_mass", 1e-6, true, asymptotics_schwarzschild_mass},
      {"static.schwarzschild_pairs", 1e-8, true, static_schwarzschild_pairs},
      {"static.flat_coordinate_pair", 1e-8, true, static_flat_coordinate_pair},
      {"static.wronskian", 1e-9, true, static_wronskian},
      {"imcf.minkowski_gap", 1e-9, true, imcf_minkowski_gap},
      {"imcf.q_constant", 1e-9, true, imcf_q_constant},
      {"imcf.smarr_independence", 1e-9, true, imcf_smarr_independence},
      {"imcf.equipotential_gap", 1e-9, true, imcf_equipotential_gap},
      {"imcf.conformal_gap", 1e-9, true, imcf_conformal_gap},
      {"imcf.conformal_involution", 1e-12, true, imcf_conformal_involution},
  };
  return defs;
}

bool selected(const std::string& name, const std::optional<std::vector<std::string>>& select) {
  if (!select) return true;
  return std::any_of(select->begin(), select->end(),
                     [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

}  // namespace

std::vector<std::string> verify_check_names() {
  std::vector<std::string> names;
  for (const CheckDef& d : suite()) names.emplace_back(d.name);
  return names;
}

VerifySummary run_verify(std::uint64_t seed, double tolerance_scale,
                         const std::optional<std::vector<std::string>>& select) {
  if (!(tolerance_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tolerance scale must be positive");
  }
  VerifySummary s;
  s.seed = seed;
  s.tolerance_scale = tolerance_scale;
  const auto& defs = suite();
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const CheckDef& d = defs[i];
    if (!selected(d.name, select)) continue;
    // Each check owns a stream derived from the seed so selections do not shift values.
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(i)};
    std::mt19937_64 rng(seq);
    VerifyCheck c;
    c.name = d.name;
    c.tolerance = d.scaled ? d.tolerance * tolerance_scale : d.tolerance;
    try {
      c.value = d.run(rng);
      c.passed = std::isfinite(c.value) && c.value <= c.tolerance;
    } catch (const Error& e) {
      c.value = std::numeric_limits<double>::infinity();
      c.passed = false;
      s.warnings.push_back(c.name + ": " + std::string(error_code_name(e.code())) + ": " + e.what());
    }
    if (!c.passed) ++s.failed;
    s.checks.push_back(c);
  }
  if (s.checks.empty()) s.warnings.push_back("selection matched no checks; vacuous pass");
  s.all_passed = s.failed == 0;
  return s;
}

std::string verify_json(const VerifySummary& summary) {
  nlohmann::ordered_json j;
  j["seed"] = summary.seed;
  j["tolerance_scale"] = summary.tolerance_scale;
  j["all_passed"] = summary.all_passed;
  j["checks_run"] = summary.checks.size();
  j["failed"] = summary.failed;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const VerifyCheck& c : summary.checks) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["passed"] = c.passed;
    e["value"] = std::isfinite(c.value) ? nlohmann::ordered_json(c.value) : nlohmann::ordered_json("inf");
    e["tolerance"] = c.tolerance;
    checks.push_back(e);
    if (!c.passed) failures.push_back(c.name);
  }
  j["checks"] = checks;
  j["failures"] = failures;
  j["warnings"] = summary.warnings;
  return j.dump(2) + "\n";
}

}  // namespace qsm
