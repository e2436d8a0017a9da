#include "qsm/commands.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qsm/asymptotics.hpp"
#include "qsm/error.hpp"
#include "qsm/evolve.hpp"
#include "qsm/radial.hpp"
#include "qsm/snapshot.hpp"
#include "qsm/static_solver.hpp"
#include "qsm/verify.hpp"

namespace qsm {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kSymmetryTolerance = 1e-10;

std::string prepare(const std::string& out_dir, const std::string& file) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  return (std::filesystem::path(out_dir) / file).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json coeffs(const ModeCoeffs& c) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < c.c.size(); ++i) a.push_back(c.c[i]);
  return a;
}

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

FitWindow default_window(const QuasiSphericalMetric& g, const RunConfig& config) {
  if (config.fit_window) return *config.fit_window;
  return FitWindow{FitOptions{}.near_field_factor * g.radii().front(), g.radii().back()};
}

Json expansion_json(const ExpansionReport& rep) {
  Json j;
  j["window"] = {rep.window.r_min, rep.window.r_max};
  j["stations"] = rep.stations;
  j["leading"] = rep.leading;
  j["quadratic"] = rep.quadratic;
  j["dot"] = coeffs(rep.dot);
  if (rep.n == 3) j["ddot"] = coeffs(rep.ddot);
  j["hat"] = coeffs(rep.hat);
  j["triple"] = coeffs(rep.triple);
  j["higher_mode_bound"] = rep.higher_mode_bound;
  j["max_condition"] = rep.max_condition;
  j["max_residual"] = rep.max_residual;
  return j;
}

// Re-evolves the innermost data with doubled lmax and station count.
QuasiSphericalMetric refined(const QuasiSphericalMetric& g, const RunConfig& config) {
  GridPtr fine = make_grid(g.dim(), 2 * g.grid()->lmax());
  ModeCoeffs dev = ModeCoeffs::zeros(fine);
  const ModeCoeffs& coarse = g.lapse_deviation(0);
  for (std::size_t i = 0; i < g.grid()->num_modes(); ++i) {
    const std::size_t j = g.dim() == 3
                              ? fine->index(g.grid()->degree(i), g.grid()->order(i))
                              : fine->index(g.grid()->degree(i));
    dev.c[Eigen::Index(j)] = coarse.c[Eigen::Index(i)];
  }
  EvolveParams p = config.evolve;
  p.r0 = g.radii().front();
  p.r_max = g.radii().back();
  p.snapshot_radii.clear();
  p.snapshot_count = 2 * g.num_stations();
  return evolve(dev, p);
}

}  // namespace

int cmd_evolve(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  GridPtr grid = make_grid(config.n, config.lmax);
  EvolveParams p = config.evolve;
  p.r0 = config.r0;
  p.r_max = config.r_max;
  const QuasiSphericalMetric g = evolve(initial_deviation(config, grid), p);
  const ResidualReport res = residual_report(g);
  const double tol = config.residual_tolerance * config.tolerance_scale;

  Json j;
  j["command"] = "evolve";
  j["n"] = config.n;
  j["lmax"] = config.lmax;
  j["r0"] = config.r0;
  j["r_max"] = config.r_max;
  j["stations"] = g.num_stations();
  j["residual_max_sup"] = res.max_sup;
  j["residual_max_l2"] = res.max_l2;
  j["worst_radius"] = res.radii.at(res.worst_station);
  j["residual_tolerance"] = tol;
  j["asymmetry"] = g.asymmetry();
  if (config.lapse.kind == LapseKind::kSchwarzschild) {
    double err = 0.0;
    for (std::size_t k = 0; k < g.num_stations(); ++k) {
      const double exact = schwarzschild_lapse(config.n, config.lapse.mass, g.radius(k));
      err = std::max(err, (g.lapse(k).v.array() - exact).abs().maxCoeff());
    }
    j["closed_form_sup_error"] = err;
  }
  Json rows = Json::array();
  for (std::size_t k = 0; k < res.radii.size(); ++k) {
    rows.push_back({{"r", res.radii[k]}, {"sup", res.sup[k]}, {"l2", res.l2[k]}});
  }
  j["stations_report"] = rows;
  const bool passed = res.max_sup <= tol;
  j["passed"] = passed;
  const std::string snap = prepare(out_dir, "metric.qsm");
  save_snapshot(snap, g);
  j["snapshot"] = "metric.qsm";
  write_json(prepare(out_dir, "evolve.json"), j);
  return passed ? 0 : 1;
}

int cmd_analyze(const std::string& snapshot, const RunConfig& config, const std::string& out_dir) {
  const Snapshot snap = load_snapshot(snapshot);
  const QuasiSphericalMetric& g = snap.metric;
  const FitWindow window = default_window(g, config);
  const ExpansionReport rep =
      g.dim() == 3 ? fit_expansion_3d(g, window) : fit_expansion_highdim(g, window);

  Json j;
  j["command"] = "analyze";
  j["n"] = g.dim();
  j["lmax"] = g.grid()->lmax();
  j["mass"] = rep.leading;
  j["lapse"] = expansion_json(rep);
  const L2RelationReport l2 = check_l2_relation(rep);
  j["l2_relation"] = {{"factor", l2.factor},
                      {"measured", coeffs(l2.measured)},
                      {"predicted", coeffs(l2.predicted)},
                      {"gap", l2.gap},
                      {"relative_to_udot", finite_or_null(l2.relative_to_udot)},
                      {"relative_to_prediction", finite_or_null(l2.relative_to_prediction)}};
  if (g.dim() >= 4) {
    const ExponentReport ex = measure_exponents(g, rep);
    j["exponents"] = {{"l1", ex.slope_l1},
                      {"l1_expected", ex.expected_l1},
                      {"l2_free", ex.slope_l2_free},
                      {"l2_free_expected", ex.expected_l2_free},
                      {"l2_forced", ex.slope_l2_forced},
                      {"l2_forced_expected", ex.expected_l2_forced}};
  }
  const PotentialField v = snap.potential ? *snap.potential : integrate_rr_potential(g);
  const PotentialExpansionReport pr = potential_expansion(g, v, window);
  Json pj = expansion_json(pr.potential);
  pj["source"] = snap.potential ? "snapshot" : "rr-integration";
  pj["leading_gap"] = pr.leading_gap;
  pj["quadratic_gap"] = pr.quadratic_gap;
  pj["quadratic_relative"] = finite_or_null(pr.quadratic_relative);
  pj["vdot_gap"] = finite_or_null(pr.vdot_gap);
  pj["vhat_gap"] = finite_or_null(pr.vhat_gap);
  if (g.dim() >= 4) {
    pj["vtriple_gap_alternative"] = finite_or_null(pr.vtriple_gap_alternative);
    pj["vtriple_gap_rederived"] = finite_or_null(pr.vtriple_gap_rederived);
  }
  j["potential"] = pj;
  write_json(prepare(out_dir, "analyze.json"), j);
  return 0;
}

int cmd_static(const std::string& snapshot, const RunConfig& config, const std::string& out_dir) {
  const Snapshot snap = load_snapshot(snapshot);
  const QuasiSphericalMetric& g = snap.metric;
  ProbeOptions opt;
  opt.inner_skip = config.static_settings.inner_skip;
  opt.outer_skip = config.static_settings.outer_skip;
  opt.audit_tolerance = config.static_settings.scalar_flat_tolerance;

  Json j;
  j["command"] = "static";
  j["n"] = g.dim();
  j["lmax"] = g.grid()->lmax();
  j["stations"] = g.num_stations();
  const ProbeResult probe = rigidity_probe(g, opt);
  const FitWindow audit{g.radius(opt.inner_skip), g.radius(g.num_stations() - 1 - opt.outer_skip)};
  const StaticResidual res = static_residual(g, probe.best, audit);
  j["audit_window"] = {audit.r_min, audit.r_max};
  j["residual"] = {{"max_rr", res.max_rr},
                   {"max_ra", res.max_ra},
                   {"max_ab_traceless", res.max_ab_traceless},
                   {"max_ab_trace", res.max_ab_trace},
                   {"max_laplace", res.max_laplace},
                   {"aggregate", res.aggregate}};
  j["defect"] = probe.defect;
  j["probe_aggregate"] = probe.aggregate;
  j["probe_parameters"] = probe.parameters;
  j["probe_condition"] = probe.condition;
  if (g.asymmetry() <= kSymmetryTolerance) {
    const SymmetricPotential sym = solve_potential_symmetric(g);
    j["symmetric"] = {{"max_scaled_wronskian", sym.max_scaled_wronskian},
                      {"drift_per_decade", sym.drift_per_decade},
                      {"residual_aggregate", static_residual(g, sym.potential, audit).aggregate}};
  }
  if (config.static_settings.refine) {
    Json table = Json::array();
    table.push_back({{"lmax", g.grid()->lmax()}, {"stations", g.num_stations()},
                     {"defect", probe.defect}});
    const QuasiSphericalMetric fine = refined(g, config);
    const ProbeResult fp = rigidity_probe(fine, opt);
    table.push_back({{"lmax", fine.grid()->lmax()}, {"stations", fine.num_stations()},
                     {"defect", fp.defect}});
    j["refinement"] = table;
    j["refinement_ratio"] = probe.defect > 0.0 ? Json(fp.defect / probe.defect) : Json(nullptr);
  }
  write_json(prepare(out_dir, "static.json"), j);
  return 0;
}

std::string trace_csv(const FlowTrace& trace) {
  std::string out = "t,r,area,int_VH,Q,dQdt,gap\n";
  char buf[512];
  for (const FlowSample& s : trace.samples) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.r,
                  s.area, s.int_vh, s.q, s.dq_dt, s.gap);
    out += buf;
  }
  return out;
}

namespace {

std::vector<double> sample_times(const RunConfig& config) {
  std::vector<double> t(config.imcf.samples);
  for (std::size_t k = 0; k < t.size(); ++k) {
    t[k] = config.imcf.t_max * double(k) / double(t.size() - 1);
  }
  return t;
}

// Log-spaced stations with every sample radius inserted, so no slice is interpolated.
std::vector<double> closed_form_radii(const RunConfig& config) {
  std::vector<double> samples;
  for (double t : sample_times(config)) {
    const double r = imcf_radius(t, config.r0, config.n);
    if (r <= config.r_max) samples.push_back(r);
  }
  std::vector<double> radii = samples;
  for (double r : log_spaced(config.r0, config.r_max, config.imcf.stations)) {
    const bool near = std::any_of(samples.begin(), samples.end(),
                                  [&](double x) { return std::abs(r - x) <= 1e-6 * x; });
    if (!near) radii.push_back(r);
  }
  std::sort(radii.begin(), radii.end());
  return radii;
}

}  // namespace

int cmd_imcf(const std::optional<std::string>& snapshot, const RunConfig& config,
             const std::string& out_dir) {
  std::optional<QuasiSphericalMetric> g;
  std::optional<PotentialField> v;
  if (config.imcf.source == "schwarzschild") {
    StaticPair p = schwarzschild(make_grid(config.n, config.lmax), config.imcf.mass,
                                 closed_form_radii(config));
    g.emplace(std::move(p.metric));
    v.emplace(std::move(p.potential));
  } else {
    if (!snapshot) throw Error(ErrorCode::kInvalidArgument, "imcf needs a snapshot file");
    Snapshot snap = load_snapshot(*snapshot);
    const bool symmetric = snap.metric.asymmetry() <= kSymmetryTolerance;
    if (!symmetric && !config.imcf.diagnostic) {
      throw Error(ErrorCode::kNotSymmetric,
                  "not an IMCF: coordinate spheres of a non-symmetric metric");
    }
    if (snap.potential) {
      v.emplace(*snap.potential);
    } else if (symmetric) {
      v.emplace(solve_potential_symmetric(snap.metric).potential);
    } else {
      v.emplace(integrate_rr_potential(snap.metric));
    }
    g.emplace(std::move(snap.metric));
  }
  QTraceOptions o;
  o.t_max = config.imcf.t_max;
  o.samples = config.imcf.samples;
  o.diagnostic = config.imcf.diagnostic;
  o.monotone_tolerance *= config.tolerance_scale;
  o.times = config.imcf.source == "schwarzschild" ? sample_times(config)
                                                  : station_times(*g, config.imcf.t_max);
  const FlowTrace trace = q_trace(*g, *v, o);
  write_text(prepare(out_dir, "trace.csv"), trace_csv(trace));

  double umbilic = 0.0, q_min = trace.samples.front().q, q_max = q_min;
  for (const FlowSample& s : trace.samples) {
    umbilic = std::max(umbilic, std::abs(s.umbilic_term));
    q_min = std::min(q_min, s.q);
    q_max = std::max(q_max, s.q);
  }
  Json j;
  j["command"] = "imcf";
  j["n"] = trace.n;
  j["m"] = trace.m;
  j["label"] = trace.is_imcf ? "imcf" : "not an IMCF";
  j["is_imcf"] = trace.is_imcf;
  j["monotone"] = trace.monotone;
  j["max_dQdt"] = trace.max_dq_dt;
  j["q_spread"] = q_max - q_min;
  j["max_umbilic_term"] = umbilic;
  j["samples"] = trace.samples.size();
  j["csv"] = "trace.csv";
  write_json(prepare(out_dir, "trace.json"), j);
  return 0;
}

int cmd_verify(const RunConfig& config, const std::string& out_dir) {
  const VerifySummary s = run_verify(config.seed, config.tolerance_scale, config.verify.select);
  write_text(prepare(out_dir, "verify.json"), verify_json(s));
  return s.all_passed ? 0 : 1;
}

}  // namespace qsm
