#pragma once

// JSON run configuration shared by the command-line subcommands.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsm/asymptotics.hpp"
#include "qsm/evolve.hpp"
#include "qsm/sphere_spectral.hpp"

namespace qsm {

struct ModeSeed {
  int degree = 1;
  int index = 0;  // order m for n = 3 (-l..l); must be 0 for n >= 4
  double amplitude = 0.0;
};

enum class LapseKind { kConstant, kSchwarzschild, kSeed };

// Initial lapse at r0. kSeed adds orthonormal-harmonic amplitudes to a
// constant base.
struct LapseSpec {
  LapseKind kind = LapseKind::kSchwarzschild;
  double value = 1.0;  // constant value, or the seed base
  double mass = 0.0;   // Schwarzschild mass
  std::vector<ModeSeed> modes;
};

struct StaticSettings {
  std::size_t inner_skip = 4;
  std::size_t outer_skip = 4;
  bool refine = false;  // repeat the probe with doubled lmax and stations
  double scalar_flat_tolerance = 1e-6;
};

struct ImcfSettings {
  std::string source = "snapshot";  // or "schwarzschild"
  double mass = 0.0;
  std::size_t stations = 200;
  double t_max = 1.0;
  std::size_t samples = 21;
  bool diagnostic = false;
};

struct VerifySettings {
  std::optional<std::vector<std::string>> select;  // check name prefixes; absent means all
};

struct RunConfig {
  int n = 3;
  int lmax = 8;
  double r0 = 2.0;
  double r_max = 200.0;
  LapseSpec lapse;
  EvolveParams evolve;  // r0, r_max mirror the fields above
  std::optional<FitWindow> fit_window;
  double residual_tolerance = 1e-8;
  StaticSettings static_settings;
  ImcfSettings imcf;
  VerifySettings verify;
  std::string output_dir = ".";
  std::uint64_t seed = 20240601;
  double tolerance_scale = 1.0;

  // Throws kConfigInvalid on the first violated precondition.
  void validate() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Initial lapse deviation u - 1 at r0 on the configured grid.
ModeCoeffs initial_deviation(const RunConfig& config, const GridPtr& grid);

}  // namespace qsm
