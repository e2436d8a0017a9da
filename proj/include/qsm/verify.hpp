#pragma once

// Property suite over all modules, driven by one RNG seed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qsm {

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerifySummary {
  std::uint64_t seed = 0;
  double tolerance_scale = 1.0;
  std::vector<VerifyCheck> checks;
  std::vector<std::string> warnings;
  std::size_t failed = 0;
  bool all_passed = true;
};

// Names of every check in suite order.
std::vector<std::string> verify_check_names();

// Runs the checks whose names start with one of the selected prefixes (all
// when absent). Tolerances are multiplied by tolerance_scale except for
// integer-valued checks.
VerifySummary run_verify(std::uint64_t seed, double tolerance_scale = 1.0,
                         const std::optional<std::vector<std::string>>& select = std::nullopt);

// Deterministic JSON text of the summary.
std::string verify_json(const VerifySummary& summary);

}  // namespace qsm
