#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carbonmfg/config.hpp"
#include "carbonmfg/output.hpp"

namespace carbonmfg {

enum class Command {
  kSolveMfc,
  kSolveMfg,
  kPoaGrid,
  kStackelbergMfc,
  kStackelbergMfg,
  kVerify,
  kDecompose,
};

const char* to_string(Command command);
std::optional<Command> parse_command(std::string_view name);
const std::vector<Command>& all_commands();

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kConfig = 2;
inline constexpr int kNotConverged = 3;
inline constexpr int kIO = 4;
inline constexpr int kAllRejected = 5;
inline constexpr int kCertificateFailed = 6;
}  // namespace exit_code

int exit_code_for(ErrorCode code);

struct RunOptions {
  Command command = Command::kSolveMfc;
  std::string config_path;
  std::optional<std::string> out_dir;  // overrides [output] dir
  int workers = 1;
  std::optional<std::uint64_t> seed;   // overrides [sim] seed
};

// Loads the config, runs the command, writes every output file plus
// manifest.json, and returns the process exit code. Progress lines go to
// `log`, diagnostics to `err`.
int run_command(const RunOptions& options, std::ostream& log, std::ostream& err);

// Building blocks shared with the tests.

CsvTable trajectory_table(const EquilibriumResult& eq, const ProducerParams& params,
                          const num::TimeGrid& grid);

struct PoaCell {
  RegulatorPolicy policy;
  EquilibriumResult mfc;
  EquilibriumResult mfg;
  PoaReport report;
  std::string error;  // non-empty when a solver threw
};

std::vector<PoaCell> poa_grid(const ScenarioConfig& cfg, int workers);
CsvTable poa_table(const std::vector<PoaCell>& cells);

CsvTable stackelberg_table(const std::vector<StackelbergCell>& cells);
// One row per tau, one column per c2; 1 for an accepted contract.
CsvTable acceptance_region_table(const std::vector<StackelbergCell>& cells,
                                 const RegulatorParams& reg);

struct Certificate {
  std::string kind;  // "mfc" or "mfg"
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, double>> values;
};

// The four simulation certificates for one equilibrium.
std::vector<Certificate> certify(const EquilibriumResult& eq, const ScenarioConfig& cfg,
                                 int workers);

}  // namespace carbonmfg
