#pragma once

// Monte Carlo simulation of the controlled state SDE under a linear feedback
// law, plus the certificates built on it: cost agreement, mean-field
// agreement, unilateral/planner deviation tests and the costate drift check.

#include <cstdint>
#include <vector>

#include "carbonmfg/equilibria.hpp"

namespace carbonmfg {

enum class SimScheme {
  // Stochastic trapezoidal rule: the drift is averaged between the two ends
  // of each step, the Brownian increment enters additively. Its mean obeys
  // the same recursion as the deterministic mean-field solver.
  kTrapezoidal,
  kEulerMaruyama,
};

const char* to_string(SimScheme scheme);

struct SimConfig {
  std::int64_t n_paths = 10000;
  std::uint64_t seed = 0;
  SimScheme scheme = SimScheme::kTrapezoidal;
  bool antithetic = false;
  int workers = 1;

  void validate() const;
};

// Paths are reduced in blocks of this many samples; the block layout (and
// therefore every floating-point sum) is independent of the worker count.
inline constexpr std::int64_t kPathBlock = 512;

// Everything the simulated producer needs: its own dynamics (at its own
// R_e), the feedback law (eta, r) with an optional additive control bump,
// and the mean field that sets the price in the revenue term.
struct PathModel {
  StateSpace dynamics;
  RiccatiPtr riccati;
  std::vector<Vec5> r;
  std::vector<double> bump;  // empty or one value per node
  std::vector<Vec5> xbar_price;
};

// The equilibrium's own feedback law and pricing mean field.
PathModel equilibrium_path_model(const EquilibriumResult& eq,
                                 const ProducerParams& params,
                                 const num::TimeGrid& grid);

struct PathBundle {
  std::vector<std::vector<Vec5>> states;      // [path][node]
  std::vector<std::vector<double>> controls;  // [path][node]
  std::vector<double> costs;                  // total cost per path
  bool antithetic = false;
};

PathBundle simulate_paths(const PathModel& model, const SimConfig& sim);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Pathwise cost by the trapezoidal rule. Antithetic bundles are averaged in
// pairs before the standard error is formed.
Estimate empirical_cost(const PathBundle& bundle, const ProducerParams& params,
                        const RegulatorPolicy& policy,
                        std::span<const Vec5> xbar_for_price, double r_e,
                        const num::TimeGrid& grid);

struct MonteCarloSummary {
  std::int64_t samples = 0;  // independent samples (pairs when antithetic)
  Estimate cost;
  std::vector<Vec5> mean;      // per node
  std::vector<Vec5> std_error; // per node
};

// Streaming version of simulate_paths + empirical_cost; memory does not
// grow with n_paths.
MonteCarloSummary run_monte_carlo(const PathModel& model, const SimConfig& sim);

struct MeanAgreement {
  double max_z = 0.0;  // largest |sample mean - xbar| / SE over checked entries
  int worst_node = 0;
  int worst_component = 0;
  int checked = 0;
  int failed = 0;
  bool passed = true;
};

// Componentwise 3 SE test of the sample mean against xbar at every
// `stride`-th node. Entries with zero SE must agree to rounding.
MeanAgreement mean_agreement(const MonteCarloSummary& mc,
                             std::span<const Vec5> xbar, int stride = 10);

struct DeviationOutcome {
  double r_e = 0.0;
  double bump_amplitude = 0.0;
  Estimate difference;  // deviation cost - equilibrium cost
  bool improves = false;  // difference < -2 SE
};

struct DeviationReport {
  std::vector<DeviationOutcome> outcomes;
  Estimate min_difference;
  bool passed = true;
};

struct DeviationSettings {
  int n_deviations = 20;
  // Bump amplitude bound relative to max(1, sup_t |Nbar|).
  double bump_scale = 0.01;
};

// Random deviations evaluated with common random numbers. Even-numbered
// deviations keep R_e and bump the control; odd-numbered ones also draw
// R_e uniformly from its bounds. MFG keeps the mean field frozen; MFC moves
// it with the deviation.
DeviationReport deviation_test(const EquilibriumResult& eq,
                               const ProducerParams& params,
                               const num::TimeGrid& grid, const SimConfig& sim,
                               const DeviationSettings& settings = {});

// Cost difference of one explicit deviation (same paths for both sides).
Estimate deviation_difference(const EquilibriumResult& eq,
                              const ProducerParams& params,
                              const num::TimeGrid& grid, const SimConfig& sim,
                              double r_e, std::span<const double> bump);

enum class CostateConvention {
  kAdjoint,   // dY^E = -Y^P dt, consistent with Y = eta X + r
  kFlipped,   // dY^E = +Y^P dt
};

struct CostateReport {
  // Largest |mean residual| / SE over nodes, per costate component.
  std::array<double, kStateDim> max_z{};
  // Largest |mean residual| / step length, per component.
  std::array<double, kStateDim> max_bias_rate{};
  // Time-averaged drift residual per path, pooled over paths.
  std::array<Estimate, kStateDim> mean_residual{};
  std::array<bool, kStateDim> within_3se{};
  // max |N - N_identity| relative to the summed magnitudes of its terms
  double control_identity_error = 0.0;
  double terminal_error = 0.0;          // max |Y^P_T - 2 tau P_T| relative
  bool passed = false;
};

CostateReport costate_residual(
    const EquilibriumResult& eq, const ProducerParams& params,
    const num::TimeGrid& grid, const SimConfig& sim,
    CostateConvention convention = CostateConvention::kAdjoint);

}  // namespace carbonmfg
