#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "qsm/commands.hpp"
#include "qsm/config.hpp"
#include "qsm/error.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance_scale;
};

qsm::RunConfig resolve(const GlobalFlags& flags) {
  qsm::RunConfig c = flags.config.empty() ? qsm::parse_config("{}") : qsm::load_config(flags.config);
  if (!flags.out.empty()) c.output_dir = flags.out;
  if (flags.seed) c.seed = *flags.seed;
  if (flags.tolerance_scale) c.tolerance_scale = *flags.tolerance_scale;
  c.validate();
  return c;
}

void add_globals(CLI::App* sub, GlobalFlags& flags) {
  sub->add_option("--config", flags.config, "JSON run configuration");
  sub->add_option("--out", flags.out, "output directory");
  sub->add_option("--seed", flags.seed, "seed for randomized checks");
  sub->add_option("--tolerance-scale", flags.tolerance_scale, "multiplier on audit tolerances");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-spherical metrics: evolution, asymptotics, static potentials, IMCF"};
  app.require_subcommand(1);
  GlobalFlags flags;
  std::string snapshot;

  CLI::App* evolve = app.add_subcommand("evolve", "evolve the lapse and write a snapshot");
  CLI::App* analyze = app.add_subcommand("analyze", "fit the large-r expansion of a snapshot");
  CLI::App* stat = app.add_subcommand("static", "static residuals and rigidity probe");
  CLI::App* imcf = app.add_subcommand("imcf", "trace Q along the coordinate IMCF");
  CLI::App* verify = app.add_subcommand("verify", "run the property suite");
  for (CLI::App* sub : {evolve, analyze, stat, imcf, verify}) add_globals(sub, flags);
  analyze->add_option("snapshot", snapshot, "snapshot file")->required();
  stat->add_option("snapshot", snapshot, "snapshot file")->required();
  imcf->add_option("snapshot", snapshot, "snapshot file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      std::cerr << "error: USAGE: " << e.what() << "\n";
      return 2;
    }
    return app.exit(e);
  }

  try {
    const qsm::RunConfig config = resolve(flags);
    const std::string& out = config.output_dir;
    if (evolve->parsed()) return qsm::cmd_evolve(config, out);
    if (analyze->parsed()) return qsm::cmd_analyze(snapshot, config, out);
    if (stat->parsed()) return qsm::cmd_static(snapshot, config, out);
    if (imcf->parsed()) {
      return qsm::cmd_imcf(snapshot.empty() ? std::nullopt : std::optional(snapshot), config, out);
    }
    return qsm::cmd_verify(config, out);
  } catch (const qsm::Error& e) {
    std::cerr << "error: " << qsm::error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: INTERNAL: " << e.what() << "\n";
    return 3;
  }
}
