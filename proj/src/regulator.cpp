#include "carbonmfg/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "carbonmfg/parallel.hpp"

namespace carbonmfg {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw SolverError(ErrorCode::kInvalidParams, what);
}

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

}  // namespace

void RegulatorParams::validate() const {
  for (double a : {alpha1, alpha2, alpha3, alpha4, alpha5}) {
    require(a >= 0.0 && std::isfinite(a), "regulator weights must be >= 0");
  }
  require(std::isfinite(pbar_target) && std::isfinite(pbar0),
          "pollution target must be finite");
  require(pbar_target >= pbar0, "pollution target must be >= initial pollution");
  require(!std::isnan(walkaway_threshold), "walkaway_threshold must be a number");
  require(!tau_grid.empty() && !c2_grid.empty(), "policy grids must be nonempty");
  require(strictly_increasing(tau_grid) && strictly_increasing(c2_grid),
          "policy grids must be strictly increasing");
}

double regulator_cost(const RegulatorParams& reg, const RegulatorPolicy& policy,
                      const MeanFieldSolution& sol, const ProducerParams& params,
                      const num::TimeGrid& grid) {
  if (static_cast<int>(sol.xbar.size()) != grid.n_nodes()) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "regulator cost: mean field does not match grid");
  }
  const double p_T = sol.xbar.back()(kPollution);
  std::vector<double> mismatch(sol.xbar.size());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double gap = sol.xbar[static_cast<std::size_t>(k)](kProduction) -
                       demand(params, grid.t(k));
    mismatch[static_cast<std::size_t>(k)] = gap * gap;
  }
  const double tau = policy.tau;
  return reg.alpha1 * std::max(0.0, p_T - reg.pbar_target) -
         reg.alpha2 * tau * (p_T - reg.pbar0) + reg.alpha3 * tau * tau +
         reg.alpha4 * num::trapezoid(mismatch, grid) +
         reg.alpha5 * policy.c2 * policy.c2;
}

bool accept_contract(double producer_cost, bool converged,
                     const RegulatorParams& reg) {
  return converged && producer_cost < reg.walkaway_threshold;
}

const char* to_string(StackelbergKind kind) {
  return kind == StackelbergKind::kMFC ? "stackelberg_mfc" : "stackelberg_mfg";
}

const char* to_string(CellStatus status) {
  switch (status) {
    case CellStatus::kAccepted:
      return "accepted";
    case CellStatus::kRejected:
      return "rejected";
    case CellStatus::kNotConverged:
      return "not_converged";
    case CellStatus::kSolverError:
      return "solver_error";
  }
  return "unknown";
}

StackelbergCell evaluate_cell(const ProducerParams& params,
                              const RegulatorParams& reg,
                              const RegulatorPolicy& policy,
                              const num::TimeGrid& grid,
                              const SolverSettings& settings,
                              StackelbergKind kind) {
  StackelbergCell cell;
  cell.policy = policy;
  try {
    cell.producer = kind == StackelbergKind::kMFC
                        ? social_opt(params, policy, grid, settings)
                        : nash_eq(params, policy, grid, settings);
  } catch (const SolverError& e) {
    cell.status = CellStatus::kSolverError;
    cell.error = e.what();
    return cell;
  }
  cell.pollution_T = cell.producer.solution.xbar.back()(kPollution);
  if (!cell.producer.converged()) {
    cell.status = CellStatus::kNotConverged;
    return cell;
  }
  cell.accepted = accept_contract(cell.producer.cost_hat, true, reg);
  cell.producer.accepted = cell.accepted;
  if (!cell.accepted) {
    cell.status = CellStatus::kRejected;
    return cell;
  }
  cell.status = CellStatus::kAccepted;
  cell.J = regulator_cost(reg, policy, cell.producer.solution, params, grid);
  return cell;
}

std::optional<std::size_t> stackelberg_argmin(
    const std::vector<StackelbergCell>& table) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& c = table[i];
    if (c.status != CellStatus::kAccepted || !std::isfinite(c.J)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = table[*best];
    const bool wins =
        c.J < b.J ||
        (c.J == b.J && (c.policy.tau < b.policy.tau ||
                        (c.policy.tau == b.policy.tau && c.policy.c2 < b.policy.c2)));
    if (wins) best = i;
  }
  return best;
}

std::vector<StackelbergCell> evaluate_policy_table(
    const ProducerParams& params, const RegulatorParams& reg,
    const num::TimeGrid& grid, const SolverSettings& settings,
    StackelbergKind kind, int workers) {
  reg.validate();
  const std::size_t nc = reg.c2_grid.size();
  std::vector<StackelbergCell> table(reg.tau_grid.size() * nc);
  parallel_for(table.size(), workers, [&](std::size_t i) {
    const RegulatorPolicy policy{reg.tau_grid[i / nc], reg.c2_grid[i % nc]};
    table[i] = evaluate_cell(params, reg, policy, grid, settings, kind);
  });
  return table;
}

StackelbergResult stackelberg_eq(const ProducerParams& params,
                                 const RegulatorParams& reg,
                                 const num::TimeGrid& grid,
                                 const SolverSettings& settings,
                                 StackelbergKind kind, int workers) {
  StackelbergResult out;
  out.kind = kind;
  out.table = evaluate_policy_table(params, reg, grid, settings, kind, workers);
  const auto best = stackelberg_argmin(out.table);
  if (!best) {
    throw SolverError(ErrorCode::kAllRejected,
                      "every policy cell was rejected or failed");
  }
  out.argmin = *best;
  out.policy_hat = out.table[*best].policy;
  out.J_hat = out.table[*best].J;
  return out;
}

}  // namespace carbonmfg
