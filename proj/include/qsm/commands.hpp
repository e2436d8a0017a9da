#pragma once

// Subcommands of the command-line tool. Each writes its artifacts into the
// output directory and returns the process exit status; failures that are
// not audit outcomes throw qsm::Error.

#include <optional>
#include <string>

#include "qsm/config.hpp"
#include "qsm/imcf.hpp"

namespace qsm {

// metric.qsm and evolve.json. Exit 1 when the residual audit fails.
int cmd_evolve(const RunConfig& config, const std::string& out_dir);

// analyze.json with the lapse and potential expansion reports.
int cmd_analyze(const std::string& snapshot, const RunConfig& config, const std::string& out_dir);

// static.json with residual norms of the best potential and the probe defect.
int cmd_static(const std::string& snapshot, const RunConfig& config, const std::string& out_dir);

// trace.csv and trace.json. The snapshot is ignored when imcf.source is
// "schwarzschild"; snapshot traces are sampled at the station radii.
int cmd_imcf(const std::optional<std::string>& snapshot, const RunConfig& config,
             const std::string& out_dir);

// verify.json. Exit 1 when any selected check fails.
int cmd_verify(const RunConfig& config, const std::string& out_dir);

// Writes FlowTrace rows with 17 significant digits.
std::string trace_csv(const FlowTrace& trace);

}  // namespace qsm
