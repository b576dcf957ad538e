#pragma once

#include <limits>
#include <string>
#include <optional>
#include <vector>

#include "carbonmfg/equilibria.hpp"

namespace carbonmfg {

struct RegulatorParams {
  double alpha1 = 0.0;  // pollution above target
  double alpha2 = 0.0;  // tax revenue credit
  double alpha3 = 0.0;  // squared tax
  double alpha4 = 0.0;  // demand mismatch
  double alpha5 = 0.0;  // squared penalty
  double pbar_target = 0.0;
  double pbar0 = 0.0;
  double walkaway_threshold = 0.0;
  std::vector<double> tau_grid;
  std::vector<double> c2_grid;

  void validate() const;
};

inline constexpr double kRejectedCost = std::numeric_limits<double>::infinity();

double regulator_cost(const RegulatorParams& reg, const RegulatorPolicy& policy,
                      const MeanFieldSolution& sol, const ProducerParams& params,
                      const num::TimeGrid& grid);

// Strict: a cost equal to the threshold is rejected.
bool accept_contract(double producer_cost, bool converged,
                     const RegulatorParams& reg);

enum class StackelbergKind { kMFC, kMFG };

const char* to_string(StackelbergKind kind);

enum class CellStatus {
  kAccepted,
  kRejected,      // producer walks away
  kNotConverged,  // fixed point failed; excluded like a rejection
  kSolverError,
};

const char* to_string(CellStatus status);

struct StackelbergCell {
  RegulatorPolicy policy;
  EquilibriumResult producer;
  CellStatus status = CellStatus::kSolverError;
  std::string error;  // set for kSolverError
  bool accepted = false;
  double pollution_T = 0.0;
  double J = kRejectedCost;
};

struct StackelbergResult {
  StackelbergKind kind = StackelbergKind::kMFC;
  std::vector<StackelbergCell> table;  // tau-major, c2-minor
  std::size_t argmin = 0;
  RegulatorPolicy policy_hat;
  double J_hat = kRejectedCost;

  const StackelbergCell& optimum() const { return table.at(argmin); }
};

// Evaluates one grid cell.
StackelbergCell evaluate_cell(const ProducerParams& params,
                              const RegulatorParams& reg,
                              const RegulatorPolicy& policy,
                              const num::TimeGrid& grid,
                              const SolverSettings& settings,
                              StackelbergKind kind);

// Index of the smallest finite J; ties go to smaller tau, then smaller c2.
// Empty when every cell is rejected.
std::optional<std::size_t> stackelberg_argmin(
    const std::vector<StackelbergCell>& table);

// Every cell of tau_grid x c2_grid, tau-major. Up to `workers` cells are
// solved concurrently; the table does not depend on the worker count.
std::vector<StackelbergCell> evaluate_policy_table(
    const ProducerParams& params, const RegulatorParams& reg,
    const num::TimeGrid& grid, const SolverSettings& settings,
    StackelbergKind kind, int workers = 1);

// Throws kAllRejected when no cell has a finite J.
StackelbergResult stackelberg_eq(const ProducerParams& params,
                                 const RegulatorParams& reg,
                                 const num::TimeGrid& grid,
                                 const SolverSettings& settings,
                                 StackelbergKind kind, int workers = 1);

}  // namespace carbonmfg
