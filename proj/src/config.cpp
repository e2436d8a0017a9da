#include "qsm/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qsm/error.hpp"
#include "qsm/metric.hpp"

namespace qsm {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kConfigInvalid, message);
}

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) invalid(where + " must be an object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) invalid("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid("key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

void require_finite(double x, const std::string& name) {
  if (!std::isfinite(x)) invalid(name + " must be finite");
}

LapseSpec parse_lapse(const json& j) {
  reject_unknown(j, "lapse", {"kind", "value", "m", "base", "modes"});
  LapseSpec spec;
  std::string kind = "schwarzschild";
  read(j, "kind", kind, "lapse");
  if (kind == "constant") {
    spec.kind = LapseKind::kConstant;
    if (!j.contains("value")) invalid("constant lapse needs 'value'");
    read(j, "value", spec.value, "lapse");
  } else if (kind == "schwarzschild") {
    spec.kind = LapseKind::kSchwarzschild;
    read(j, "m", spec.mass, "lapse");
  } else if (kind == "seed") {
    spec.kind = LapseKind::kSeed;
    read(j, "base", spec.value, "lapse");
    if (j.contains("modes")) {
      if (!j.at("modes").is_array()) invalid("lapse.modes must be an array");
      for (const json& m : j.at("modes")) {
        reject_unknown(m, "lapse.modes[]", {"l", "index", "amplitude"});
        ModeSeed s;
        read(m, "l", s.degree, "lapse.modes[]");
        read(m, "index", s.index, "lapse.modes[]");
        read(m, "amplitude", s.amplitude, "lapse.modes[]");
        spec.modes.push_back(s);
      }
    }
  } else {
    invalid("lapse.kind must be constant, schwarzschild or seed");
  }
  return spec;
}

}  // namespace

void RunConfig::validate() const {
  if (n < kMinDimension || n > kMaxDimension) invalid("n must lie in [3, 8]");
  if (lmax < kMinLmax) invalid("lmax must be at least 4");
  require_finite(r0, "r0");
  require_finite(r_max, "r_max");
  if (!(r0 > 0.0) || !(r_max > r0)) invalid("need 0 < r0 < r_max");
  switch (lapse.kind) {
    case LapseKind::kConstant:
    case LapseKind::kSeed:
      require_finite(lapse.value, "lapse value");
      if (!(lapse.value > 0.0)) invalid("initial lapse must be positive");
      break;
    case LapseKind::kSchwarzschild:
      require_finite(lapse.mass, "lapse.m");
      if (!(std::pow(r0, n - 2) > 2.0 * lapse.mass)) {
        invalid("r0^(n-2) must exceed 2m for the Schwarzschild lapse");
      }
      break;
  }
  for (const ModeSeed& s : lapse.modes) {
    require_finite(s.amplitude, "mode amplitude");
    if (s.degree < 0 || s.degree > lmax) invalid("seed degree outside [0, lmax]");
    if (std::abs(s.index) > s.degree || (n != 3 && s.index != 0)) invalid("seed index out of range");
  }
  EvolveParams p = evolve;
  p.r0 = r0;
  p.r_max = r_max;
  try {
    p.validate();
  } catch (const Error& e) {
    invalid(std::string("evolve: ") + e.what());
  }
  if (fit_window && !(fit_window->r_min >= r0 && fit_window->r_max <= r_max &&
                      fit_window->r_max > fit_window->r_min)) {
    invalid("fit_window must lie inside [r0, r_max]");
  }
  if (!(residual_tolerance > 0.0)) invalid("residual_tolerance must be positive");
  if (!(static_settings.scalar_flat_tolerance > 0.0)) invalid("scalar_flat_tolerance must be positive");
  if (imcf.source != "snapshot" && imcf.source != "schwarzschild") {
    invalid("imcf.source must be snapshot or schwarzschild");
  }
  if (imcf.source == "schwarzschild" && !(std::pow(r0, n - 2) > 2.0 * imcf.mass)) {
    invalid("r0^(n-2) must exceed 2m for the imcf background");
  }
  if (imcf.stations < 16) invalid("imcf.stations must be at least 16");
  if (!(imcf.t_max > 0.0)) invalid("imcf.t_max must be positive");
  if (imcf.samples < 3) invalid("imcf.samples must be at least 3");
  if (!(tolerance_scale > 0.0) || !std::isfinite(tolerance_scale)) {
    invalid("tolerance_scale must be positive");
  }
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    invalid(std::string("malformed JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"n", "lmax", "r0", "r_max", "lapse", "evolve", "fit_window", "audit", "static",
                  "imcf", "verify", "out", "seed", "tolerance_scale"});
  RunConfig c;
  read(j, "n", c.n, "config");
  read(j, "lmax", c.lmax, "config");
  read(j, "r0", c.r0, "config");
  read(j, "r_max", c.r_max, "config");
  if (j.contains("lapse")) c.lapse = parse_lapse(j.at("lapse"));
  if (j.contains("evolve")) {
    const json& e = j.at("evolve");
    reject_unknown(e, "evolve",
                   {"safety", "max_step", "min_step", "snapshots", "u_floor", "u_ceiling"});
    read(e, "safety", c.evolve.safety, "evolve");
    read(e, "max_step", c.evolve.max_step, "evolve");
    read(e, "min_step", c.evolve.min_step, "evolve");
    read(e, "snapshots", c.evolve.snapshot_count, "evolve");
    read(e, "u_floor", c.evolve.u_floor, "evolve");
    read(e, "u_ceiling", c.evolve.u_ceiling, "evolve");
  }
  if (j.contains("fit_window")) {
    const json& w = j.at("fit_window");
    reject_unknown(w, "fit_window", {"r_min", "r_max"});
    FitWindow fw;
    if (!w.contains("r_min") || !w.contains("r_max")) invalid("fit_window needs r_min and r_max");
    read(w, "r_min", fw.r_min, "fit_window");
    read(w, "r_max", fw.r_max, "fit_window");
    c.fit_window = fw;
  }
  if (j.contains("audit")) {
    const json& a = j.at("audit");
    reject_unknown(a, "audit", {"residual_tolerance", "scalar_flat_tolerance"});
    read(a, "residual_tolerance", c.residual_tolerance, "audit");
    read(a, "scalar_flat_tolerance", c.static_settings.scalar_flat_tolerance, "audit");
  }
  if (j.contains("static")) {
    const json& s = j.at("static");
    reject_unknown(s, "static", {"inner_skip", "outer_skip", "refine"});
    read(s, "inner_skip", c.static_settings.inner_skip, "static");
    read(s, "outer_skip", c.static_settings.outer_skip, "static");
    read(s, "refine", c.static_settings.refine, "static");
  }
  if (j.contains("imcf")) {
    const json& s = j.at("imcf");
    reject_unknown(s, "imcf", {"source", "m", "stations", "t_max", "samples", "diagnostic"});
    read(s, "source", c.imcf.source, "imcf");
    read(s, "m", c.imcf.mass, "imcf");
    read(s, "stations", c.imcf.stations, "imcf");
    read(s, "t_max", c.imcf.t_max, "imcf");
    read(s, "samples", c.imcf.samples, "imcf");
    read(s, "diagnostic", c.imcf.diagnostic, "imcf");
  }
  if (j.contains("verify")) {
    const json& s = j.at("verify");
    reject_unknown(s, "verify", {"select"});
    if (s.contains("select")) {
      std::vector<std::string> sel;
      read(s, "select", sel, "verify");
      c.verify.select = sel;
    }
  }
  read(j, "out", c.output_dir, "config");
  read(j, "seed", c.seed, "config");
  read(j, "tolerance_scale", c.tolerance_scale, "config");
  c.evolve.r0 = c.r0;
  c.evolve.r_max = c.r_max;
  c.evolve.audit_tolerance = c.residual_tolerance;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

ModeCoeffs initial_deviation(const RunConfig& config, const GridPtr& grid) {
  ModeCoeffs dev = ModeCoeffs::zeros(grid);
  const double root = std::sqrt(grid->measure());
  switch (config.lapse.kind) {
    case LapseKind::kConstant:
      dev.c[0] = (config.lapse.value - 1.0) * root;
      break;
    case LapseKind::kSchwarzschild:
      dev.c[0] = (schwarzschild_lapse(config.n, config.lapse.mass, config.r0) - 1.0) * root;
      break;
    case LapseKind::kSeed:
      dev.c[0] = (config.lapse.value - 1.0) * root;
      for (const ModeSeed& s : config.lapse.modes) dev.c[Eigen::Index(grid->index(s.degree, s.index))] += s.amplitude;
      break;
  }
  return dev;
}

}  // namespace qsm
