#include <limits>

#include "carbonmfg/equilibria.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carbonmfg;
using carbonmfg::testing::baseline_grid;
using carbonmfg::testing::baseline_params;
using carbonmfg::testing::rel_diff;
using carbonmfg::testing::sup_abs_diff;

TEST_SUITE("equilibria") {

TEST_CASE("scalar search finds interior and boundary minima") {
  SearchConfig cfg;
  const auto interior = minimize_scalar([](double x) { return (x - 3.7) * (x - 3.7); }, 0.0, 10.0, cfg);
  CHECK(interior.x == doctest::Approx(3.7).epsilon(1e-6));
  const auto edge = minimize_scalar([](double x) { return x; }, 2.0, 5.0, cfg);
  CHECK(edge.x == 2.0);
  // Two wells; the coarse scan must pick the deeper one.
  auto wells = [](double x) {
    return std::min((x - 1.0) * (x - 1.0) + 0.5, 2.0 * (x - 8.0) * (x - 8.0));
  };
  CHECK(minimize_scalar(wells, 0.0, 10.0, cfg).x == doctest::Approx(8.0).epsilon(1e-6));
}

TEST_CASE("flat objectives resolve to the smaller abscissa") {
  SearchConfig cfg;
  CHECK(minimize_scalar([](double) { return 1.0; }, 0.0, 10.0, cfg).x == 0.0);
  auto plateau = [](double x) { return x < 4.0 ? 1.0 : 0.0; };
  CHECK(minimize_scalar(plateau, 0.0, 10.0, cfg).x == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("config validation") {
  SearchConfig s;
  s.coarse_points = 1;
  CHECK_THROWS_AS(s.validate(), SolverError);
  FixedPointConfig f;
  f.damping = 0.0;
  CHECK_THROWS_AS(f.validate(), SolverError);
  f = FixedPointConfig{};
  f.epsilon = -1.0;
  CHECK_THROWS_AS(f.validate(), SolverError);
  f = FixedPointConfig{};
  f.max_iters = 0;
  CHECK_THROWS_AS(f.validate(), SolverError);
}

TEST_CASE("planner search agrees with an exhaustive 4001-point scan") {
  // Shorter horizon with the baseline step size keeps the scan cheap.
  const auto p = baseline_params();
  const num::TimeGrid g(5.0, 183);
  const RegulatorPolicy pol{100.0, 1000.0};
  const auto eq = social_opt(p, pol, g);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 4000; ++i) {
    const double r_e = p.re_lower + (p.re_upper - p.re_lower) * i / 4000.0;
    best = std::min(best, optim_mfc_n(p, pol, r_e, g).analytic_cost);
  }
  CAPTURE(eq.r_e_hat);
  CHECK(eq.cost_hat <= best + 1e-6 * std::abs(best));
  CHECK(rel_diff(eq.cost_hat, best) <= 1e-6);
  CHECK(eq.converged());
}

TEST_CASE("planner cost is nondecreasing in the tax at fixed investment") {
  const auto p = baseline_params();
  for (double r_e : {0.0, 200.0}) {
    double prev = -std::numeric_limits<double>::infinity();
    for (double tau : {0.0, 25.0, 50.0, 100.0}) {
      const double c = optim_mfc_n(p, {tau, 1000.0}, r_e, baseline_grid()).analytic_cost;
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("no tax means no renewable investment in either kind") {
  const auto p = baseline_params();
  const RegulatorPolicy pol{0.0, 1000.0};
  const auto mfc = social_opt(p, pol, baseline_grid());
  const auto mfg = nash_eq(p, pol, baseline_grid());
  CHECK(mfc.r_e_hat == 0.0);
  CHECK(mfg.r_e_hat == 0.0);
  CHECK(mfg.converged());
}

TEST_CASE("game equilibrium is self-consistent and dominated by the planner") {
  const auto p = baseline_params();
  const RegulatorPolicy pol{50.0, 1000.0};
  const auto mfg = nash_eq(p, pol, baseline_grid());
  REQUIRE(mfg.converged());
  const double again = optim_mfg_n(p, pol, mfg.r_e_hat, mfg.mean_field, baseline_grid());
  CHECK(rel_diff(again, mfg.cost_hat) <= 1e-9);
  const auto mfc = social_opt(p, pol, baseline_grid());
  CHECK(mfc.cost_hat <= mfg.cost_hat + 1e-8 * std::abs(mfg.cost_hat));
  const auto rep = poa_report(mfc, mfg);
  REQUIRE(rep.poa.has_value());
  CHECK(*rep.poa >= 1.0 - 1e-9);
  CHECK(mfg.r_e_hat >= p.re_lower);
  CHECK(mfg.r_e_hat <= p.re_upper);
}

TEST_CASE("without price interaction the game converges at once and matches the planner") {
  ProducerParams p = baseline_params();
  p.rho1 = 0.0;
  const RegulatorPolicy pol{50.0, 1000.0};
  const auto mfg = nash_eq(p, pol, baseline_grid());
  const auto mfc = social_opt(p, pol, baseline_grid());
  CHECK(mfg.converged());
  CHECK(mfg.iterations <= 2);
  CHECK(rel_diff(mfg.cost_hat, mfc.cost_hat) <= 1e-9);
  CHECK(std::abs(mfg.r_e_hat - mfc.r_e_hat) <= 1e-9 * std::max(1.0, mfc.r_e_hat));
  CHECK(price_of_anarchy(p, pol, baseline_grid()) == doctest::Approx(1.0).epsilon(1e-9));

  // The best-response cost cannot depend on the frozen field.
  std::vector<Vec5> a(731, p.xbar0);
  std::vector<Vec5> b(731, Vec5::Constant(1e4));
  CHECK(rel_diff(optim_mfg_n(p, pol, 10.0, a, baseline_grid()),
                 optim_mfg_n(p, pol, 10.0, b, baseline_grid())) <= 1e-12);
}

TEST_CASE("undamped iteration contracts on a short horizon") {
  const auto p = baseline_params();
  SolverSettings s;
  s.fixed_point.damping = 1.0;
  const auto eq = nash_eq(p, {50.0, 1000.0}, num::TimeGrid(2.0, 73), s);
  REQUIRE(eq.converged());
  REQUIRE(eq.residuals.size() >= 2);
  for (std::size_t i = 1; i < eq.residuals.size(); ++i) {
    CHECK(eq.residuals[i] < eq.residuals[i - 1]);
  }
}

TEST_CASE("PoA is undefined for non-converged runs and non-positive planner costs") {
  EquilibriumResult mfc;
  EquilibriumResult mfg;
  mfc.cost_hat = 10.0;
  mfg.cost_hat = 12.0;
  CHECK(poa_report(mfc, mfg).poa.value() == doctest::Approx(1.2));
  mfg.status = ConvergenceStatus::kOscillating;
  CHECK_FALSE(poa_report(mfc, mfg).poa.has_value());
  mfg.status = ConvergenceStatus::kConverged;
  mfc.cost_hat = -5.0;
  CHECK_FALSE(poa_report(mfc, mfg).poa.has_value());
}

TEST_CASE("Riccati cache returns one solution per investment level") {
  RiccatiCache cache(baseline_params(), {50.0, 1000.0}, baseline_grid());
  const auto a = cache.get(cache.state_space(10.0));
  const auto b = cache.get(cache.state_space(10.0));
  const auto c = cache.get(cache.state_space(20.0));
  CHECK(a.get() == b.get());
  CHECK(a.get() != c.get());
  CHECK(cache.size() == 2);
}

}  // TEST_SUITE
