#include <iostream>

#include "CLI11.hpp"
#include "carbonmfg/commands.hpp"

namespace {

const char* describe(carbonmfg::Command c) {
  using carbonmfg::Command;
  switch (c) {
    case Command::kSolveMfc: return "planner optimum at [policy] (trajectory.csv, summary.json)";
    case Command::kSolveMfg: return "Nash equilibrium at [policy] (trajectory.csv, summary.json)";
    case Command::kPoaGrid: return "MFC/MFG costs and PoA over the policy grids (poa_grid.csv)";
    case Command::kStackelbergMfc: return "regulator grid search with planner producers (stackelberg.csv)";
    case Command::kStackelbergMfg: return "regulator grid search with Nash producers (stackelberg.csv)";
    case Command::kVerify: return "Monte Carlo certificates at [policy] (verify.csv)";
    case Command::kDecompose: return "renewable/fuel production split (decomposition_*.csv)";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carbon-tax mean-field equilibria, Stackelberg policy search and "
               "Monte Carlo certificates"};
  app.require_subcommand(1);

  carbonmfg::RunOptions options;
  std::string out_dir;
  std::uint64_t seed = 0;

  for (carbonmfg::Command command : carbonmfg::all_commands()) {
    auto* sub = app.add_subcommand(carbonmfg::to_string(command), describe(command));
    sub->add_option("--config", options.config_path, "scenario file (TOML)")
        ->required();
    sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    sub->add_option("--workers", options.workers, "concurrent grid cells / path blocks")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Monte Carlo seed (overrides [sim] seed)");
    sub->callback([&options, command] { options.command = command; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : carbonmfg::exit_code::kConfig;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--out") > 0) options.out_dir = out_dir;
    if (sub->count("--seed") > 0) options.seed = seed;
  }
  return carbonmfg::run_command(options, std::cout, std::cerr);
}
