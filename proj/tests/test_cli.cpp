#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qsm/commands.hpp"
#include "qsm/config.hpp"
#include "qsm/error.hpp"
#include "qsm/snapshot.hpp"
#include "qsm/verify.hpp"

using namespace qsm;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("qsm_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

const char* kSchwarzschild = R"({"n": 3, "lmax": 4, "r0": 3, "r_max": 300,
  "lapse": {"kind": "schwarzschild", "m": 1},
  "evolve": {"snapshots": 120, "max_step": 0.01}})";

const char* kSchwarzschildFar = R"({"n": 3, "lmax": 4, "r0": 3, "r_max": 3000,
  "lapse": {"kind": "schwarzschild", "m": 1}, "evolve": {"snapshots": 120}})";

const char* kSeeded = R"({"n": 3, "lmax": 6, "r0": 2, "r_max": 1000,
  "lapse": {"kind": "seed", "base": 1.2, "modes": [{"l": 1, "index": 0, "amplitude": 0.01}]},
  "evolve": {"snapshots": 120, "max_step": 0.02}, "fit_window": {"r_min": 100, "r_max": 1000}})";

struct Shell {
  int status;
  std::string output;
};

Shell run(const std::string& args) {
  const std::string cmd = std::string(QSM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

}  // namespace

TEST(Config, DefaultsValidate) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.n, 3);
  EXPECT_EQ(c.lapse.kind, LapseKind::kSchwarzschild);
  EXPECT_DOUBLE_EQ(c.evolve.r0, c.r0);
}

TEST(Config, RejectsInvalidInput) {
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"lapse": {"kind": "constant", "value": 0}})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"n": 9})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"lmax": 2})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"r0": 5, "r_max": 4})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"colour": 1})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config(R"({"n": "three"})"); });
  expect_code(ErrorCode::kConfigInvalid, [] { parse_config("{not json"); });
  expect_code(ErrorCode::kConfigInvalid,
              [] { parse_config(R"({"r0": 1, "lapse": {"kind": "schwarzschild", "m": 0.5}})"); });
  expect_code(ErrorCode::kConfigInvalid, [] {
    parse_config(R"({"n": 4, "lapse": {"kind": "seed", "modes": [{"l": 1, "index": 1, "amplitude": 1}]}})");
  });
  expect_code(ErrorCode::kConfigInvalid,
              [] { parse_config(R"({"fit_window": {"r_min": 1, "r_max": 50}})"); });
}

TEST(Config, SeedAmplitudesAreOrthonormalCoefficients) {
  const RunConfig c = parse_config(
      R"({"lapse": {"kind": "seed", "base": 1.5, "modes": [{"l": 2, "index": -1, "amplitude": 0.3}]}})");
  GridPtr g = make_grid(3, c.lmax);
  const ModeCoeffs d = initial_deviation(c, g);
  EXPECT_NEAR(d.c[0], 0.5 * std::sqrt(4.0 * M_PI), 1e-14);
  EXPECT_DOUBLE_EQ(d.c[Eigen::Index(g->index(2, -1))], 0.3);
}

TEST(CmdEvolve, SchwarzschildReportAndSnapshot) {
  const fs::path out = scratch("evolve");
  EXPECT_EQ(cmd_evolve(parse_config(kSchwarzschild), out.string()), 0);
  const json j = read_json(out / "evolve.json");
  EXPECT_LT(j["residual_max_sup"].get<double>(), 1e-8);
  EXPECT_LT(j["closed_form_sup_error"].get<double>(), 1e-6);
  EXPECT_TRUE(j["passed"].get<bool>());
  const Snapshot snap = load_snapshot((out / "metric.qsm").string());
  EXPECT_EQ(snap.metric.num_stations(), 120u);
}

TEST(CmdEvolve, AuditFailureGivesExitOne) {
  const fs::path out = scratch("evolve_audit");
  RunConfig c = parse_config(kSchwarzschild);
  c.residual_tolerance = 1e-30;
  EXPECT_EQ(cmd_evolve(c, out.string()), 1);
  EXPECT_FALSE(read_json(out / "evolve.json")["passed"].get<bool>());
}

TEST(CmdEvolve, GuardPolicy) {
  const fs::path out = scratch("evolve_guard");
  // Constant large data is exterior Schwarzschild and decays inside the guard.
  EXPECT_EQ(cmd_evolve(parse_config(R"({"r0": 1, "r_max": 10, "lapse": {"kind": "constant", "value": 15}})"),
                       out.string()),
            0);
  expect_code(ErrorCode::kBlowUpGuard, [&] {
    cmd_evolve(parse_config(R"({"r0": 1, "r_max": 10, "lapse": {"kind": "seed", "base": 15,
      "modes": [{"l": 1, "index": 0, "amplitude": 20}]}})"),
               out.string());
  });
}

TEST(CmdAnalyze, SchwarzschildMass) {
  const fs::path out = scratch("analyze");
  const RunConfig c = parse_config(kSchwarzschildFar);
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  EXPECT_EQ(cmd_analyze((out / "metric.qsm").string(), c, out.string()), 0);
  const json j = read_json(out / "analyze.json");
  EXPECT_NEAR(j["mass"].get<double>(), 1.0, 1e-6);
  EXPECT_NEAR(j["potential"]["leading"].get<double>(), -1.0, 1e-6);
  EXPECT_EQ(j["potential"]["source"], "rr-integration");
}

TEST(CmdAnalyze, SeededRunReportsRelationGap) {
  const fs::path out = scratch("analyze_seed");
  const RunConfig c = parse_config(kSeeded);
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  EXPECT_EQ(cmd_analyze((out / "metric.qsm").string(), c, out.string()), 0);
  const json j = read_json(out / "analyze.json");
  ASSERT_TRUE(j["l2_relation"].contains("relative_to_prediction"));
  EXPECT_LT(j["l2_relation"]["relative_to_prediction"].get<double>(), 0.05);
  EXPECT_DOUBLE_EQ(j["l2_relation"]["factor"].get<double>(), -3.5);
  EXPECT_LT(j["potential"]["vdot_gap"].get<double>(), 0.05);
}

TEST(CmdAnalyze, TruncatedSnapshot) {
  const fs::path out = scratch("analyze_trunc");
  const RunConfig c = parse_config(kSchwarzschild);
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  const fs::path snap = out / "metric.qsm";
  fs::resize_file(snap, fs::file_size(snap) / 2);
  expect_code(ErrorCode::kSnapshotCorrupt, [&] { cmd_analyze(snap.string(), c, out.string()); });
  expect_code(ErrorCode::kSnapshotCorrupt, [&] { cmd_static(snap.string(), c, out.string()); });
}

TEST(CmdStatic, SchwarzschildHasNoDefect) {
  const fs::path out = scratch("static");
  const RunConfig c = parse_config(kSchwarzschild);
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  EXPECT_EQ(cmd_static((out / "metric.qsm").string(), c, out.string()), 0);
  const json j = read_json(out / "static.json");
  EXPECT_LT(j["defect"].get<double>(), 1e-8);
  EXPECT_LT(j["residual"]["aggregate"].get<double>(), 1e-7);
  EXPECT_LT(j["symmetric"]["max_scaled_wronskian"].get<double>(), 1e-8);
}

TEST(CmdStatic, SeededRefinementTable) {
  const fs::path out = scratch("static_seed");
  RunConfig c = parse_config(R"({"n": 3, "lmax": 4, "r0": 2, "r_max": 100,
    "lapse": {"kind": "seed", "base": 1.2, "modes": [{"l": 1, "index": 0, "amplitude": 0.05}]},
    "evolve": {"snapshots": 40}, "static": {"refine": true}})");
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  EXPECT_EQ(cmd_static((out / "metric.qsm").string(), c, out.string()), 0);
  const json j = read_json(out / "static.json");
  EXPECT_GT(j["defect"].get<double>(), 1e-7);
  ASSERT_EQ(j["refinement"].size(), 2u);
  EXPECT_EQ(j["refinement"][1]["lmax"].get<int>(), 8);
  EXPECT_EQ(j["refinement"][1]["stations"].get<int>(), 80);
  EXPECT_GT(j["refinement"][1]["defect"].get<double>(), 0.0);
}

TEST(CmdStatic, RejectsNonScalarFlatSnapshot) {
  const fs::path out = scratch("static_flat");
  const std::vector<double> radii = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21};
  GridPtr g = make_grid(3, 4);
  std::vector<ModeCoeffs> dev(radii.size(), ModeCoeffs::zeros(g));
  for (auto& d : dev) d.c[0] = 0.3;
  save_snapshot((out / "bad.qsm").string(), QuasiSphericalMetric(g, radii, dev, std::vector<ModeCoeffs>(radii.size(), ModeCoeffs::zeros(g))));
  expect_code(ErrorCode::kNotScalarFlat,
              [&] { cmd_static((out / "bad.qsm").string(), parse_config("{}"), out.string()); });
}

TEST(CmdImcf, SchwarzschildAndFlatTraces) {
  for (double m : {1.0, 0.0}) {
    const fs::path out = scratch("imcf");
    RunConfig c = parse_config(R"({"n": 4, "lmax": 4, "r0": 2, "r_max": 50,
      "imcf": {"source": "schwarzschild", "t_max": 2, "samples": 11}})");
    c.imcf.mass = m;
    EXPECT_EQ(cmd_imcf(std::nullopt, c, out.string()), 0);
    std::istringstream csv(slurp(out / "trace.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,r,area,int_VH,Q,dQdt,gap");
    const double target = 3.0 * std::cbrt(2.0 * M_PI * M_PI);
    int rows = 0;
    while (std::getline(csv, line)) {
      std::vector<double> v;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
      ASSERT_EQ(v.size(), 7u);
      EXPECT_NEAR(v[4], target, 1e-9);
      EXPECT_NEAR(v[5], 0.0, 1e-9);
      ++rows;
    }
    EXPECT_EQ(rows, 11);
    const json j = read_json(out / "trace.json");
    EXPECT_TRUE(j["monotone"].get<bool>());
    EXPECT_EQ(j["label"], "imcf");
  }
}

TEST(CmdImcf, ClosedFormSlicesAreStations) {
  const fs::path out = scratch("imcf_default");
  RunConfig c = parse_config(R"({"imcf": {"source": "schwarzschild", "m": 0.5}})");
  EXPECT_EQ(cmd_imcf(std::nullopt, c, out.string()), 0);
  const json j = read_json(out / "trace.json");
  EXPECT_TRUE(j["monotone"].get<bool>());
  EXPECT_LT(j["max_dQdt"].get<double>(), 1e-11);
  EXPECT_EQ(j["samples"].get<std::size_t>(), 21u);
}

TEST(CmdImcf, SnapshotSampledAtStations) {
  const fs::path out = scratch("imcf_snap");
  RunConfig c = parse_config(kSchwarzschild);
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  c.imcf.t_max = 1.0;
  EXPECT_EQ(cmd_imcf((out / "metric.qsm").string(), c, out.string()), 0);
  const json j = read_json(out / "trace.json");
  EXPECT_NEAR(j["m"].get<double>(), 1.0, 1e-8);
  EXPECT_LT(j["q_spread"].get<double>(), 1e-8);
}

TEST(CmdImcf, RefusesSeededSnapshot) {
  const fs::path out = scratch("imcf_seed");
  RunConfig c = parse_config(R"({"n": 3, "lmax": 4, "r0": 2, "r_max": 20,
    "lapse": {"kind": "seed", "base": 1.2, "modes": [{"l": 1, "index": 0, "amplitude": 0.01}]},
    "evolve": {"snapshots": 30}})");
  ASSERT_EQ(cmd_evolve(c, out.string()), 0);
  try {
    cmd_imcf((out / "metric.qsm").string(), c, out.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotSymmetric);
    EXPECT_NE(std::string(e.what()).find("not an IMCF"), std::string::npos);
  }
  c.imcf.diagnostic = true;
  EXPECT_EQ(cmd_imcf((out / "metric.qsm").string(), c, out.string()), 0);
  EXPECT_EQ(read_json(out / "trace.json")["label"], "not an IMCF");
}

TEST(CmdVerify, DefaultSeedPassesAndIsDeterministic) {
  const fs::path a = scratch("verify_a"), b = scratch("verify_b");
  const RunConfig c = parse_config(R"({"seed": 7})");
  EXPECT_EQ(cmd_verify(c, a.string()), 0);
  EXPECT_EQ(cmd_verify(c, b.string()), 0);
  EXPECT_EQ(slurp(a / "verify.json"), slurp(b / "verify.json"));
  const json j = read_json(a / "verify.json");
  EXPECT_TRUE(j["all_passed"].get<bool>());
  EXPECT_EQ(j["checks_run"].get<std::size_t>(), verify_check_names().size());
}

TEST(CmdVerify, TightenedToleranceListsFailures) {
  const VerifySummary s = run_verify(7, 1e-4, std::vector<std::string>{"static", "imcf"});
  EXPECT_FALSE(s.all_passed);
  EXPECT_GT(s.failed, 0u);
  const json j = json::parse(verify_json(s));
  EXPECT_EQ(j["failures"].size(), s.failed);
}

TEST(CmdVerify, EmptySelectionIsVacuousWithWarning) {
  const VerifySummary s = run_verify(7, 1.0, std::vector<std::string>{});
  EXPECT_TRUE(s.all_passed);
  EXPECT_TRUE(s.checks.empty());
  ASSERT_EQ(s.warnings.size(), 1u);
}

TEST(CmdVerify, SelectionDoesNotShiftValues) {
  const VerifySummary all = run_verify(11, 1.0, std::vector<std::string>{"spectral"});
  const VerifySummary one = run_verify(11, 1.0, std::vector<std::string>{"spectral.parseval"});
  ASSERT_EQ(one.checks.size(), 1u);
  for (const VerifyCheck& c : all.checks) {
    if (c.name == "spectral.parseval") EXPECT_EQ(c.value, one.checks[0].value);
  }
}

TEST(Binary, ErrorLineFormat) {
  const fs::path out = scratch("binary");
  std::ofstream(out / "bad.json") << R"({"lapse": {"kind": "constant", "value": 0}})";
  const Shell r = run("evolve --config " + (out / "bad.json").string() + " --out " + out.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.output.rfind("error: CONFIG_INVALID: ", 0), 0u) << r.output;
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);

  const Shell missing = run("analyze " + (out / "none.qsm").string() + " --out " + out.string());
  EXPECT_EQ(missing.status, 2);
  EXPECT_EQ(missing.output.rfind("error: IO: ", 0), 0u) << missing.output;

  const Shell usage = run("");
  EXPECT_EQ(usage.status, 2);
  EXPECT_EQ(usage.output.rfind("error: USAGE: ", 0), 0u) << usage.output;
}

TEST(Binary, VerifySubsetWithFlags) {
  const fs::path out = scratch("binary_verify");
  std::ofstream(out / "cfg.json") << R"({"verify": {"select": ["spectral.round_trip"]}})";
  const Shell r = run("verify --config " + (out / "cfg.json").string() + " --out " + out.string() +
                      " --seed 99 --tolerance-scale 2");
  EXPECT_EQ(r.status, 0) << r.output;
  const json j = read_json(out / "verify.json");
  EXPECT_EQ(j["seed"].get<std::uint64_t>(), 99u);
  EXPECT_DOUBLE_EQ(j["tolerance_scale"].get<double>(), 2.0);
  EXPECT_EQ(j["checks"].size(), 1u);
}
