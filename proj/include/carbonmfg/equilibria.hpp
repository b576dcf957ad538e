#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "carbonmfg/lqsolver.hpp"

namespace carbonmfg {

enum class ConvergenceStatus { kConverged, kMaxIterReached, kOscillating };

const char* to_string(ConvergenceStatus status);

// One-dimensional search over the admissible R_e interval: uniform coarse
// scan, then golden-section refinement around the best scan point.
struct SearchConfig {
  int coarse_points = 41;
  double relative_width = 1e-8;  // final bracket width / interval length

  void validate() const;
};

struct FixedPointConfig {
  // Stop when sup_t |Xbar_br - Xbar^k|_2 <= epsilon * (1 + sup_t |Xbar^k|_2).
  double epsilon = 1e-6;
  int max_iters = 200;
  double damping = 0.5;
  double fallback_damping = 0.25;
  int oscillation_window = 8;

  void validate() const;
};

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Minimizes f over [lo, hi]. Ties resolve to the smaller abscissa.
ScalarMinimum minimize_scalar(const std::function<double(double)>& f,
                              double lo, double hi, const SearchConfig& cfg);

// Memoizes Riccati solves by R_e for one (params, policy, grid).
class RiccatiCache {
 public:
  RiccatiCache(ProducerParams params, RegulatorPolicy policy,
               num::TimeGrid grid, RiccatiOptions options = {});

  StateSpace state_space(double r_e) const;
  RiccatiPtr get(const StateSpace& ss);
  std::size_t size() const noexcept { return cache_.size(); }

 private:
  ProducerParams params_;
  RegulatorPolicy policy_;
  num::TimeGrid grid_;
  RiccatiOptions options_;
  std::map<double, RiccatiPtr> cache_;
};

struct EquilibriumResult {
  MeanFieldKind kind = MeanFieldKind::kMFC;
  double r_e_hat = 0.0;
  double cost_hat = 0.0;
  // For MFG, `solution.xbar` is the mean field induced by the equilibrium
  // feedback and `mean_field` is the frozen field the cost was priced at.
  // For MFC both are the coupled solution.
  MeanFieldSolution solution;
  std::vector<Vec5> mean_field;
  std::vector<double> control;  // mean control at every node
  ConvergenceStatus status = ConvergenceStatus::kConverged;
  int iterations = 0;
  std::vector<double> residuals;  // fixed-point residual per iteration
  bool accepted = false;

  bool converged() const noexcept {
    return status == ConvergenceStatus::kConverged;
  }
};

struct SolverSettings {
  SearchConfig search;
  FixedPointConfig fixed_point;
  RiccatiOptions riccati;
};

// Planner cost and solution for a fixed R_e.
MeanFieldSolution optim_mfc_n(const ProducerParams& params,
                              const RegulatorPolicy& policy, double r_e,
                              const num::TimeGrid& grid,
                              const RiccatiOptions& riccati = {});

EquilibriumResult social_opt(const ProducerParams& params,
                             const RegulatorPolicy& policy,
                             const num::TimeGrid& grid,
                             const SolverSettings& settings = {});

// Best-response cost against a frozen mean field. The field is not updated.
double optim_mfg_n(const ProducerParams& params, const RegulatorPolicy& policy,
                   double r_e, std::span<const Vec5> xbar_fixed,
                   const num::TimeGrid& grid,
                   const RiccatiOptions& riccati = {});

// Mean trajectory with N = 0 and R_e = 0.
std::vector<Vec5> uncontrolled_mean(const ProducerParams& params,
                                    const num::TimeGrid& grid);

// Damped Picard iteration on the mean field. Never throws on
// non-convergence; the status says what happened.
EquilibriumResult nash_eq(const ProducerParams& params,
                          const RegulatorPolicy& policy,
                          const num::TimeGrid& grid,
                          const SolverSettings& settings = {});

struct PoaReport {
  double cost_mfc = 0.0;
  double cost_mfg = 0.0;
  std::optional<double> poa;  // empty when undefined
  const char* reason = "";
};

PoaReport poa_report(const EquilibriumResult& mfc, const EquilibriumResult& mfg);

// Throws kUndefinedPoA when either run did not converge or cost_mfc <= 0.
double price_of_anarchy(const ProducerParams& params,
                        const RegulatorPolicy& policy,
                        const num::TimeGrid& grid,
                        const SolverSettings& settings = {});

}  // namespace carbonmfg
