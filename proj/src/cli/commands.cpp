#include "carbonmfg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>

#include "carbonmfg/parallel.hpp"
#include "json.hpp"

#ifndef CARBONMFG_VERSION
#define CARBONMFG_VERSION "0.0.0"
#endif

namespace carbonmfg {

namespace {

using Json = nlohmann::ordered_json;

// JSON has no infinity; non-finite values travel as the CSV sentinels.
Json jnum(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

std::string fmt(double x) { return format_double(x); }

const char* kind_name(MeanFieldKind kind) {
  return kind == MeanFieldKind::kMFC ? "mfc" : "mfg";
}

Json equilibrium_json(const EquilibriumResult& eq) {
  Json j;
  j["kind"] = kind_name(eq.kind);
  j["tau"] = jnum(eq.solution.policy.tau);
  j["c2"] = jnum(eq.solution.policy.c2);
  j["r_e_hat"] = jnum(eq.r_e_hat);
  j["cost"] = jnum(eq.cost_hat);
  j["status"] = to_string(eq.status);
  j["iterations"] = eq.iterations;
  j["final_residual"] = jnum(eq.residuals.empty() ? 0.0 : eq.residuals.back());
  j["pollution_T"] = jnum(eq.solution.xbar.back()(kPollution));
  return j;
}

struct Context {
  const RunOptions& options;
  ScenarioConfig cfg;
  num::TimeGrid grid;
  std::filesystem::path out_dir;
  std::string hash;
  std::ostream& log;
  Json cells = Json::array();
  Json outputs = Json::array();

  void write(const std::string& name, std::string_view contents) {
    write_file(out_dir / name, contents);
    outputs.push_back(name);
    log << "wrote " << (out_dir / name).string() << '\n';
  }

  void write_json(const std::string& name, Json j) {
    Json doc;
    doc["command"] = to_string(options.command);
    doc["config_hash"] = hash;
    for (auto& [k, v] : j.items()) doc[k] = v;
    write(name, doc.dump(2) + "\n");
  }

  void record_cell(const RegulatorPolicy& policy, const char* kind,
                   const std::string& status, int iterations) {
    cells.push_back({{"tau", jnum(policy.tau)},
                     {"c2", jnum(policy.c2)},
                     {"kind", kind},
                     {"status", status},
                     {"iterations", iterations}});
  }
};

int cmd_solve(Context& ctx, MeanFieldKind kind) {
  const auto& cfg = ctx.cfg;
  const EquilibriumResult eq =
      kind == MeanFieldKind::kMFC
          ? social_opt(cfg.producer, cfg.policy, ctx.grid, cfg.solver)
          : nash_eq(cfg.producer, cfg.policy, ctx.grid, cfg.solver);
  ctx.record_cell(cfg.policy, kind_name(kind), to_string(eq.status), eq.iterations);
  ctx.write("trajectory.csv", trajectory_table(eq, cfg.producer, ctx.grid).str());
  ctx.write_json("summary.json", equilibrium_json(eq));
  ctx.log << kind_name(kind) << ": r_e_hat=" << fmt(eq.r_e_hat)
          << " cost=" << fmt(eq.cost_hat) << " status=" << to_string(eq.status)
          << '\n';
  return eq.converged() ? exit_code::kOk : exit_code::kNotConverged;
}

int cmd_poa_grid(Context& ctx) {
  const auto cells = poa_grid(ctx.cfg, ctx.options.workers);
  bool all_converged = true;
  int defined = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  Json undefined = Json::array();
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      all_converged = false;
      ctx.record_cell(c.policy, "mfc+mfg", "solver_error", 0);
      undefined.push_back(
          {{"tau", jnum(c.policy.tau)}, {"c2", jnum(c.policy.c2)}, {"reason", c.error}});
      continue;
    }
    ctx.record_cell(c.policy, "mfc", to_string(c.mfc.status), c.mfc.iterations);
    ctx.record_cell(c.policy, "mfg", to_string(c.mfg.status), c.mfg.iterations);
    all_converged = all_converged && c.mfc.converged() && c.mfg.converged();
    if (c.report.poa) {
      ++defined;
      lo = std::min(lo, *c.report.poa);
      hi = std::max(hi, *c.report.poa);
    } else {
      undefined.push_back({{"tau", jnum(c.policy.tau)},
                           {"c2", jnum(c.policy.c2)},
                           {"reason", c.report.reason}});
    }
  }
  ctx.write("poa_grid.csv", poa_table(cells).str());
  Json j;
  j["n_cells"] = cells.size();
  j["n_poa_defined"] = defined;
  j["poa_min"] = jnum(defined > 0 ? lo : std::nan(""));
  j["poa_max"] = jnum(defined > 0 ? hi : std::nan(""));
  j["undefined"] = undefined;
  ctx.write_json("summary.json", j);
  return all_converged ? exit_code::kOk : exit_code::kNotConverged;
}

int cmd_stackelberg(Context& ctx, StackelbergKind kind) {
  const auto& cfg = ctx.cfg;
  const auto table = evaluate_policy_table(cfg.producer, cfg.regulator, ctx.grid,
                                           cfg.solver, kind, ctx.options.workers);
  int counts[4] = {0, 0, 0, 0};
  for (const auto& c : table) {
    ++counts[static_cast<int>(c.status)];
    ctx.record_cell(c.policy, kind == StackelbergKind::kMFC ? "mfc" : "mfg",
                    to_string(c.status), c.producer.iterations);
  }
  ctx.write("stackelberg.csv", stackelberg_table(table).str());
  ctx.write("acceptance_region.csv", acceptance_region_table(table, cfg.regulator).str());
  const auto best = stackelberg_argmin(table);
  Json j;
  j["kind"] = to_string(kind);
  j["n_cells"] = table.size();
  j["n_accepted"] = counts[static_cast<int>(CellStatus::kAccepted)];
  j["n_rejected"] = counts[static_cast<int>(CellStatus::kRejected)];
  j["n_not_converged"] = counts[static_cast<int>(CellStatus::kNotConverged)];
  j["n_solver_error"] = counts[static_cast<int>(CellStatus::kSolverError)];
  if (best) {
    const auto& c = table[*best];
    j["argmin"] = {{"tau", jnum(c.policy.tau)},
                   {"c2", jnum(c.policy.c2)},
                   {"J", jnum(c.J)},
                   {"producer_cost", jnum(c.producer.cost_hat)},
                   {"re_hat", jnum(c.producer.r_e_hat)},
                   {"pollution_T", jnum(c.pollution_T)}};
    ctx.log << to_string(kind) << ": argmin tau=" << fmt(c.policy.tau)
            << " c2=" << fmt(c.policy.c2) << " J=" << fmt(c.J) << '\n';
  } else {
    j["argmin"] = nullptr;
  }
  ctx.write_json("summary.json", j);
  if (!best) {
    throw SolverError(ErrorCode::kAllRejected,
                      "every policy cell was rejected or failed");
  }
  return exit_code::kOk;
}

int cmd_verify(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<EquilibriumResult> eqs;
  eqs.push_back(social_opt(cfg.producer, cfg.policy, ctx.grid, cfg.solver));
  eqs.push_back(nash_eq(cfg.producer, cfg.policy, ctx.grid, cfg.solver));
  CsvTable csv({"kind", "certificate", "result", "metric", "value"});
  Json certs = Json::array();
  Json equilibria = Json::array();
  bool all_passed = true;
  bool all_converged = true;
  for (const auto& eq : eqs) {
    ctx.record_cell(cfg.policy, kind_name(eq.kind), to_string(eq.status), eq.iterations);
    equilibria.push_back(equilibrium_json(eq));
    if (!eq.converged()) {
      all_converged = false;
      ctx.log << kind_name(eq.kind) << ": not converged, certificates skipped\n";
      continue;
    }
    for (const auto& c : certify(eq, cfg, ctx.options.workers)) {
      all_passed = all_passed && c.passed;
      const char* result = c.passed ? "PASS" : "FAIL";
      ctx.log << c.kind << ' ' << c.name << ' ' << result;
      Json values;
      for (const auto& [metric, value] : c.values) {
        ctx.log << ' ' << metric << '=' << fmt(value);
        csv.row({c.kind, c.name, result, metric, fmt(value)});
        values[metric] = jnum(value);
      }
      ctx.log << '\n';
      certs.push_back({{"kind", c.kind},
                       {"certificate", c.name},
                       {"result", result},
                       {"values", values}});
    }
  }
  ctx.write("verify.csv", csv.str());
  Json j;
  j["equilibria"] = equilibria;
  j["certificates"] = certs;
  j["passed"] = all_passed;
  ctx.write_json("summary.json", j);
  if (!all_passed) return exit_code::kCertificateFailed;
  return all_converged ? exit_code::kOk : exit_code::kNotConverged;
}

int cmd_decompose(Context& ctx) {
  const auto& cfg = ctx.cfg;
  Json parts = Json::array();
  bool all_converged = true;
  for (auto kind : {MeanFieldKind::kMFC, MeanFieldKind::kMFG}) {
    const EquilibriumResult eq =
        kind == MeanFieldKind::kMFC
            ? social_opt(cfg.producer, cfg.policy, ctx.grid, cfg.solver)
            : nash_eq(cfg.producer, cfg.policy, ctx.grid, cfg.solver);
    ctx.record_cell(cfg.policy, kind_name(kind), to_string(eq.status), eq.iterations);
    all_converged = all_converged && eq.converged();
    const auto& xbar = eq.solution.xbar;
    const auto dec = production_decomposition(xbar, cfg.producer, eq.r_e_hat, ctx.grid);
    CsvTable csv({"t", "Qbar", "renewable_mean", "nonrenewable_mean", "reconstructed",
                  "D"});
    double gap = 0.0;
    double renewable_share = 0.0;
    for (std::size_t k = 0; k < xbar.size(); ++k) {
      const double t = ctx.grid.t(static_cast<int>(k));
      const double q = xbar[k](kProduction);
      gap = std::max(gap, std::abs(dec.total[k] - q));
      renewable_share = std::max(renewable_share, std::abs(dec.renewable[k]));
      csv.row({fmt(t), fmt(q), fmt(dec.renewable[k]), fmt(dec.nonrenewable[k]),
               fmt(dec.total[k]), fmt(demand(cfg.producer, t))});
    }
    ctx.write(std::string("decomposition_") + kind_name(kind) + ".csv", csv.str());
    Json j = equilibrium_json(eq);
    j["max_reconstruction_gap"] = jnum(gap);
    j["max_abs_renewable"] = jnum(renewable_share);
    parts.push_back(j);
  }
  Json j;
  j["equilibria"] = parts;
  ctx.write_json("summary.json", j);
  return all_converged ? exit_code::kOk : exit_code::kNotConverged;
}

int dispatch(Context& ctx) {
  switch (ctx.options.command) {
    case Command::kSolveMfc:
      return cmd_solve(ctx, MeanFieldKind::kMFC);
    case Command::kSolveMfg:
      return cmd_solve(ctx, MeanFieldKind::kMFG);
    case Command::kPoaGrid:
      return cmd_poa_grid(ctx);
    case Command::kStackelbergMfc:
      return cmd_stackelberg(ctx, StackelbergKind::kMFC);
    case Command::kStackelbergMfg:
      return cmd_stackelberg(ctx, StackelbergKind::kMFG);
    case Command::kVerify:
      return cmd_verify(ctx);
    case Command::kDecompose:
      return cmd_decompose(ctx);
  }
  return exit_code::kInternal;
}

}  // namespace

const char* to_string(Command command) {
  switch (command) {
    case Command::kSolveMfc:
      return "solve-mfc";
    case Command::kSolveMfg:
      return "solve-mfg";
    case Command::kPoaGrid:
      return "poa-grid";
    case Command::kStackelbergMfc:
      return "stackelberg-mfc";
    case Command::kStackelbergMfg:
      return "stackelberg-mfg";
    case Command::kVerify:
      return "verify";
    case Command::kDecompose:
      return "decompose";
  }
  return "unknown";
}

const std::vector<Command>& all_commands() {
  static const std::vector<Command> kAll = {
      Command::kSolveMfc,       Command::kSolveMfg, Command::kPoaGrid,
      Command::kStackelbergMfc, Command::kStackelbergMfg, Command::kVerify,
      Command::kDecompose};
  return kAll;
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : all_commands()) {
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidParams:
      return exit_code::kConfig;
    case ErrorCode::kIO:
      return exit_code::kIO;
    case ErrorCode::kAllRejected:
      return exit_code::kAllRejected;
    default:
      return exit_code::kInternal;
  }
}

CsvTable trajectory_table(const EquilibriumResult& eq, const ProducerParams& params,
                          const num::TimeGrid& grid) {
  const auto& xbar = eq.solution.xbar;
  const auto dec = production_decomposition(xbar, params, eq.r_e_hat, grid);
  CsvTable csv({"t", "Qbar", "Sbar", "Ebar", "Pbar", "Nbar_cum", "Nbar_rate", "D",
                "renewable_mean", "nonrenewable_mean"});
  for (std::size_t k = 0; k < xbar.size(); ++k) {
    const double t = grid.t(static_cast<int>(k));
    const Vec5& x = xbar[k];
    csv.row({fmt(t), fmt(x(kProduction)), fmt(x(kIrradiance)), fmt(x(kEmission)),
             fmt(x(kPollution)), fmt(x(kFuel)), fmt(eq.control[k]),
             fmt(demand(params, t)), fmt(dec.renewable[k]), fmt(dec.nonrenewable[k])});
  }
  return csv;
}

std::vector<PoaCell> poa_grid(const ScenarioConfig& cfg, int workers) {
  const auto& reg = cfg.regulator;
  const num::TimeGrid grid = cfg.grid();
  std::vector<PoaCell> cells(reg.tau_grid.size() * reg.c2_grid.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    PoaCell& c = cells[i];
    c.policy = {reg.tau_grid[i / reg.c2_grid.size()], reg.c2_grid[i % reg.c2_grid.size()]};
    try {
      c.mfc = social_opt(cfg.producer, c.policy, grid, cfg.solver);
      c.mfg = nash_eq(cfg.producer, c.policy, grid, cfg.solver);
      c.report = poa_report(c.mfc, c.mfg);
    } catch (const SolverError& e) {
      c.error = e.what();
    }
  });
  return cells;
}

CsvTable poa_table(const std::vector<PoaCell>& cells) {
  CsvTable csv({"tau", "c2", "cost_mfc", "cost_mfg", "poa", "status_mfg"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      csv.row({fmt(c.policy.tau), fmt(c.policy.c2), fmt(nan), fmt(nan), fmt(nan),
               "solver_error"});
      continue;
    }
    csv.row({fmt(c.policy.tau), fmt(c.policy.c2), fmt(c.report.cost_mfc),
             fmt(c.report.cost_mfg), fmt(c.report.poa ? *c.report.poa : nan),
             to_string(c.mfg.status)});
  }
  return csv;
}

CsvTable stackelberg_table(const std::vector<StackelbergCell>& cells) {
  CsvTable csv({"tau", "c2", "accepted", "status", "producer_cost", "re_hat",
                "pollution_T", "J"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : cells) {
    const bool solved = c.status != CellStatus::kSolverError;
    csv.row({fmt(c.policy.tau), fmt(c.policy.c2), c.accepted ? "1" : "0",
             to_string(c.status), fmt(solved ? c.producer.cost_hat : nan),
             fmt(solved ? c.producer.r_e_hat : nan), fmt(solved ? c.pollution_T : nan),
             fmt(c.J)});
  }
  return csv;
}

CsvTable acceptance_region_table(const std::vector<StackelbergCell>& cells,
                                 const RegulatorParams& reg) {
  std::vector<std::string> header{"tau"};
  for (double c2 : reg.c2_grid) header.push_back("c2=" + fmt(c2));
  CsvTable csv(header);
  const std::size_t width = reg.c2_grid.size();
  if (cells.size() != reg.tau_grid.size() * width) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "acceptance region: table does not match the policy grids");
  }
  for (std::size_t i = 0; i < reg.tau_grid.size(); ++i) {
    std::vector<std::string> row{fmt(reg.tau_grid[i])};
    for (std::size_t j = 0; j < width; ++j) {
      row.push_back(cells[i * width + j].accepted ? "1" : "0");
    }
    csv.row(std::move(row));
  }
  return csv;
}

std::vector<Certificate> certify(const EquilibriumResult& eq, const ScenarioConfig& cfg,
                                 int workers) {
  const num::TimeGrid grid = cfg.grid();
  const ProducerParams& p = cfg.producer;
  const std::string kind = kind_name(eq.kind);
  std::vector<Certificate> out;

  SimConfig sim = cfg.sim.sim;
  sim.workers = workers;
  const MonteCarloSummary mc = run_monte_carlo(equilibrium_path_model(eq, p, grid), sim);
  {
    const double diff = mc.cost.mean - eq.cost_hat;
    const double se = mc.cost.std_error;
    Certificate c{kind, "cost_agreement", std::abs(diff) <= 3.0 * se, {}};
    c.values = {{"analytic", eq.cost_hat},
                {"empirical", mc.cost.mean},
                {"std_error", se},
                {"z", se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff))},
                {"samples", static_cast<double>(mc.samples)}};
    out.push_back(std::move(c));
  }
  {
    const MeanAgreement m = mean_agreement(mc, eq.solution.xbar, 10);
    out.push_back({kind,
                   "mean_field_agreement",
                   m.passed,
                   {{"max_z", m.max_z},
                    {"worst_node", m.worst_node},
                    {"worst_component", m.worst_component},
                    {"failed", m.failed},
                    {"checked", m.checked}}});
  }
  {
    SimConfig dsim = sim;
    dsim.n_paths = cfg.sim.deviation_paths;
    const DeviationReport d = deviation_test(eq, p, grid, dsim, cfg.sim.deviation);
    const auto improving = std::count_if(d.outcomes.begin(), d.outcomes.end(),
                                         [](const DeviationOutcome& o) { return o.improves; });
    out.push_back({kind,
                   "deviation",
                   d.passed,
                   {{"min_difference", d.min_difference.mean},
                    {"std_error", d.min_difference.std_error},
                    {"improving", static_cast<double>(improving)},
                    {"deviations", static_cast<double>(d.outcomes.size())}}});
  }
  {
    SimConfig csim = sim;
    csim.n_paths = cfg.sim.costate_paths;
    const CostateReport r = costate_residual(eq, p, grid, csim);
    Certificate c{kind, "costate", r.passed, {}};
    static constexpr const char* kNames[kStateDim] = {"Q", "S", "E", "P", "Ntilde"};
    for (int i = 0; i < kStateDim; ++i) {
      const Estimate& e = r.mean_residual[static_cast<std::size_t>(i)];
      c.values.emplace_back(std::string("mean_residual_") + kNames[i], e.mean);
      c.values.emplace_back(std::string("std_error_") + kNames[i], e.std_error);
    }
    c.values.emplace_back("control_identity_error", r.control_identity_error);
    c.values.emplace_back("terminal_error", r.terminal_error);
    out.push_back(std::move(c));
  }
  return out;
}

int run_command(const RunOptions& options, std::ostream& log, std::ostream& err) {
  const std::string started = utc_timestamp();
  if (options.workers < 1) {
    err << "error: --workers must be >= 1\n";
    return exit_code::kConfig;
  }
  ScenarioConfig cfg;
  try {
    cfg = load_config(options.config_path);
    if (options.seed) cfg.sim.sim.seed = *options.seed;
  } catch (const SolverError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }

  Context ctx{options,
              cfg,
              cfg.grid(),
              options.out_dir ? std::filesystem::path(*options.out_dir)
                              : std::filesystem::path(cfg.output_dir),
              config_hash(cfg),
              log};
  int code = exit_code::kInternal;
  std::string error;
  try {
    code = dispatch(ctx);
  } catch (const SolverError& e) {
    error = e.what();
    code = exit_code_for(e.code());
  } catch (const std::exception& e) {
    error = e.what();
    code = exit_code::kInternal;
  }
  if (!error.empty()) err << "error: " << error << '\n';

  Json manifest;
  manifest["tool"] = "carbonmfg";
  manifest["version"] = CARBONMFG_VERSION;
  manifest["command"] = to_string(options.command);
  manifest["config_path"] = options.config_path;
  manifest["config_hash"] = ctx.hash;
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_timestamp();
  manifest["workers"] = options.workers;
  manifest["seeds"] = {{"sim_seed", cfg.sim.sim.seed},
                       {"seed_overridden", options.seed.has_value()}};
  manifest["cells"] = ctx.cells;
  manifest["outputs"] = ctx.outputs;
  manifest["exit_code"] = code;
  if (!error.empty()) manifest["error"] = error;
  try {
    write_file(ctx.out_dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const SolverError& e) {
    err << "error: " << e.what() << '\n';
    if (code == exit_code::kOk) code = exit_code::kIO;
  }
  return code;
}

}  // namespace carbonmfg
