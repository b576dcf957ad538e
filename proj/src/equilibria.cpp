#include "carbonmfg/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace carbonmfg {

namespace {

constexpr double kInvPhi = 0.6180339887498949;  // (sqrt(5) - 1) / 2

double sup_norm(std::span<const Vec5> x) {
  double out = 0.0;
  for (const auto& v : x) out = std::max(out, v.norm());
  return out;
}

double sup_diff(std::span<const Vec5> a, std::span<const Vec5> b) {
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) out = std::max(out, (a[k] - b[k]).norm());
  return out;
}

// Strictly better, or equal value at a smaller abscissa.
bool better(double value, double x, const ScalarMinimum& best) {
  return value < best.value || (value == best.value && x < best.x);
}

struct MfgIterate {
  double r_e = 0.0;
  BestResponse response;
};

MfgIterate best_response_search(RiccatiCache& cache, const ProducerParams& params,
                                std::span<const Vec5> xbar,
                                const SearchConfig& search) {
  auto cost_at = [&](double r_e) {
    const StateSpace ss = cache.state_space(r_e);
    const auto r = solve_r_mfg(ss, *cache.get(ss), xbar);
    MeanFieldSolution sol;
    sol.kind = MeanFieldKind::kMFG;
    sol.riccati = cache.get(ss);
    sol.r = r;
    sol.s0 = compute_s0(ss, *sol.riccati, sol.r);
    return analytic_cost(ss, sol);
  };
  const ScalarMinimum best =
      minimize_scalar(cost_at, params.re_lower, params.re_upper, search);
  const StateSpace ss = cache.state_space(best.x);
  return {best.x, best_response_mfg(ss, cache.get(ss), xbar)};
}

}  // namespace

const char* to_string(ConvergenceStatus status) {
  switch (status) {
    case ConvergenceStatus::kConverged:
      return "converged";
    case ConvergenceStatus::kMaxIterReached:
      return "max_iter_reached";
    case ConvergenceStatus::kOscillating:
      return "oscillating";
  }
  return "unknown";
}

void SearchConfig::validate() const {
  if (coarse_points < 2) {
    throw SolverError(ErrorCode::kInvalidParams, "search needs >= 2 coarse points");
  }
  if (!(relative_width > 0.0 && relative_width < 1.0)) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "search relative_width must be in (0, 1)");
  }
}

void FixedPointConfig::validate() const {
  if (!(epsilon > 0.0)) {
    throw SolverError(ErrorCode::kInvalidParams, "fixed point epsilon must be > 0");
  }
  if (max_iters < 1) {
    throw SolverError(ErrorCode::kInvalidParams, "max_iters must be >= 1");
  }
  if (!(damping > 0.0 && damping <= 1.0) ||
      !(fallback_damping > 0.0 && fallback_damping <= 1.0)) {
    throw SolverError(ErrorCode::kInvalidParams, "damping must be in (0, 1]");
  }
  if (oscillation_window < 2) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "oscillation_window must be >= 2");
  }
}

ScalarMinimum minimize_scalar(const std::function<double(double)>& f,
                              double lo, double hi, const SearchConfig& cfg) {
  cfg.validate();
  if (!(lo <= hi)) {
    throw SolverError(ErrorCode::kInvalidParams, "empty search interval");
  }
  ScalarMinimum best{lo, f(lo), 1};
  if (lo == hi) return best;

  const int m = cfg.coarse_points;
  const double span = hi - lo;
  auto node = [&](int i) {
    return i == m - 1 ? hi : lo + span * static_cast<double>(i) / (m - 1);
  };
  int best_i = 0;
  for (int i = 1; i < m; ++i) {
    const double x = node(i);
    const double v = f(x);
    ++best.evaluations;
    if (better(v, x, best)) {
      best = {x, v, best.evaluations};
      best_i = i;
    }
  }

  double a = node(std::max(0, best_i - 1));
  double b = node(std::min(m - 1, best_i + 1));
  const double target = cfg.relative_width * span;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  best.evaluations += 2;
  if (better(fc, c, best)) best = {c, fc, best.evaluations};
  if (better(fd, d, best)) best = {d, fd, best.evaluations};
  while (b - a > target) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
      ++best.evaluations;
      if (better(fc, c, best)) best = {c, fc, best.evaluations};
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
      ++best.evaluations;
      if (better(fd, d, best)) best = {d, fd, best.evaluations};
    }
  }
  return best;
}

RiccatiCache::RiccatiCache(ProducerParams params, RegulatorPolicy policy,
                           num::TimeGrid grid, RiccatiOptions options)
    : params_(std::move(params)),
      policy_(policy),
      grid_(grid),
      options_(options) {}

StateSpace RiccatiCache::state_space(double r_e) const {
  return StateSpace(params_, policy_, r_e, grid_);
}

RiccatiPtr RiccatiCache::get(const StateSpace& ss) {
  auto it = cache_.find(ss.r_e());
  if (it != cache_.end()) return it->second;
  auto sol = std::make_shared<const RiccatiSolution>(solve_riccati(ss, options_));
  cache_.emplace(ss.r_e(), sol);
  return sol;
}

MeanFieldSolution optim_mfc_n(const ProducerParams& params,
                              const RegulatorPolicy& policy, double r_e,
                              const num::TimeGrid& grid,
                              const RiccatiOptions& riccati) {
  const StateSpace ss(params, policy, r_e, grid);
  return solve_mfc(ss, std::make_shared<const RiccatiSolution>(
                           solve_riccati(ss, riccati)));
}

EquilibriumResult social_opt(const ProducerParams& params,
                             const RegulatorPolicy& policy,
                             const num::TimeGrid& grid,
                             const SolverSettings& settings) {
  auto cost_at = [&](double r_e) {
    return optim_mfc_n(params, policy, r_e, grid, settings.riccati).analytic_cost;
  };
  const ScalarMinimum best =
      minimize_scalar(cost_at, params.re_lower, params.re_upper, settings.search);

  EquilibriumResult out;
  out.kind = MeanFieldKind::kMFC;
  out.solution = optim_mfc_n(params, policy, best.x, grid, settings.riccati);
  out.r_e_hat = best.x;
  out.cost_hat = out.solution.analytic_cost;
  out.mean_field = out.solution.xbar;
  const StateSpace ss(params, policy, best.x, grid);
  out.control = mean_control(ss, *out.solution.riccati, out.solution.r,
                             out.solution.xbar);
  out.status = ConvergenceStatus::kConverged;
  out.iterations = 1;
  return out;
}

double optim_mfg_n(const ProducerParams& params, const RegulatorPolicy& policy,
                   double r_e, std::span<const Vec5> xbar_fixed,
                   const num::TimeGrid& grid, const RiccatiOptions& riccati) {
  const StateSpace ss(params, policy, r_e, grid);
  MeanFieldSolution sol;
  sol.kind = MeanFieldKind::kMFG;
  sol.riccati = std::make_shared<const RiccatiSolution>(solve_riccati(ss, riccati));
  sol.r = solve_r_mfg(ss, *sol.riccati, xbar_fixed);
  sol.s0 = compute_s0(ss, *sol.riccati, sol.r);
  return analytic_cost(ss, sol);
}

std::vector<Vec5> uncontrolled_mean(const ProducerParams& params,
                                    const num::TimeGrid& grid) {
  ProducerParams p = params;
  p.re_lower = 0.0;
  const StateSpace ss(p, RegulatorPolicy{}, 0.0, grid);
  RiccatiSolution zero;
  zero.eta.assign(static_cast<std::size_t>(grid.n_nodes()), Mat5::Zero());
  const std::vector<Vec5> r(static_cast<std::size_t>(grid.n_nodes()), Vec5::Zero());
  return solve_xbar(ss, zero, r);
}

EquilibriumResult nash_eq(const ProducerParams& params,
                          const RegulatorPolicy& policy,
                          const num::TimeGrid& grid,
                          const SolverSettings& settings) {
  const FixedPointConfig& fp = settings.fixed_point;
  fp.validate();
  settings.search.validate();
  RiccatiCache cache(params, policy, grid, settings.riccati);

  EquilibriumResult out;
  out.kind = MeanFieldKind::kMFG;
  std::vector<Vec5> xbar = uncontrolled_mean(params, grid);
  MfgIterate current;

  double damping = fp.damping;
  bool retried = false;
  int since_restart = 0;
  out.status = ConvergenceStatus::kMaxIterReached;
  int budget = fp.max_iters;
  while (budget-- > 0) {
    current = best_response_search(cache, params, xbar, settings.search);
    const auto& induced = current.response.solution.xbar;
    const double residual = sup_diff(induced, xbar);
    out.residuals.push_back(residual);
    ++out.iterations;
    ++since_restart;

    if (residual <= fp.epsilon * (1.0 + sup_norm(xbar))) {
      out.status = ConvergenceStatus::kConverged;
      break;
    }

    const int w = fp.oscillation_window;
    if (since_restart > w) {
      const auto& h = out.residuals;
      if (h.back() >= 0.9 * h[h.size() - 1 - static_cast<std::size_t>(w)]) {
        if (retried) {
          out.status = ConvergenceStatus::kOscillating;
          break;
        }
        retried = true;
        damping = fp.fallback_damping;
        since_restart = 0;
        budget = fp.max_iters;
      }
    }

    // The initial guess carries no information, so the first update is a
    // plain best-response step.
    const double lambda = out.iterations == 1 ? 1.0 : damping;
    for (std::size_t k = 0; k < xbar.size(); ++k) {
      xbar[k] = (1.0 - lambda) * xbar[k] + lambda * induced[k];
    }
  }

  out.r_e_hat = current.r_e;
  out.cost_hat = current.response.cost;
  out.solution = std::move(current.response.solution);
  out.mean_field = std::move(xbar);
  const StateSpace ss(params, policy, out.r_e_hat, grid);
  out.control = mean_control(ss, *out.solution.riccati, out.solution.r,
                             out.solution.xbar);
  return out;
}

PoaReport poa_report(const EquilibriumResult& mfc, const EquilibriumResult& mfg) {
  PoaReport out;
  out.cost_mfc = mfc.cost_hat;
  out.cost_mfg = mfg.cost_hat;
  if (!mfc.converged() || !mfg.converged()) {
    out.reason = "not converged";
  } else if (!(mfc.cost_hat > 0.0)) {
    out.reason = "non-positive planner cost";
  } else {
    out.poa = mfg.cost_hat / mfc.cost_hat;
  }
  return out;
}

double price_of_anarchy(const ProducerParams& params,
                        const RegulatorPolicy& policy,
                        const num::TimeGrid& grid,
                        const SolverSettings& settings) {
  const PoaReport report = poa_report(social_opt(params, policy, grid, settings),
                                      nash_eq(params, policy, grid, settings));
  if (!report.poa) {
    throw SolverError(ErrorCode::kUndefinedPoA,
                      std::string(report.reason) +
                          ": cost_mfc=" + std::to_string(report.cost_mfc) +
                          " cost_mfg=" + std::to_string(report.cost_mfg));
  }
  return *report.poa;
}

}  // namespace carbonmfg
