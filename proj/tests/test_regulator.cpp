#include <limits>

#include "carbonmfg/regulator.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace carbonmfg;
using carbonmfg::testing::baseline_params;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RegulatorParams weights(double a1, double a2, double a3, double a4, double a5) {
  RegulatorParams reg;
  reg.alpha1 = a1;
  reg.alpha2 = a2;
  reg.alpha3 = a3;
  reg.alpha4 = a4;
  reg.alpha5 = a5;
  reg.walkaway_threshold = kInf;
  reg.tau_grid = {0.0};
  reg.c2_grid = {0.0};
  return reg;
}

// Mean field with Q - D fixed at `gap` and terminal pollution `p_T`.
MeanFieldSolution synthetic(const ProducerParams& p, const num::TimeGrid& g, double gap,
                            double p_T) {
  MeanFieldSolution sol;
  sol.xbar.resize(static_cast<std::size_t>(g.n_nodes()), Vec5::Zero());
  for (int k = 0; k < g.n_nodes(); ++k) {
    Vec5& x = sol.xbar[static_cast<std::size_t>(k)];
    x(kProduction) = demand(p, g.t(k)) + gap;
    x(kPollution) = p_T * g.t(k) / g.horizon();
  }
  return sol;
}

StackelbergCell cell(double tau, double c2, double J, bool accepted = true) {
  StackelbergCell c;
  c.policy = {tau, c2};
  c.accepted = accepted;
  c.status = accepted ? CellStatus::kAccepted : CellStatus::kRejected;
  c.J = accepted ? J : kRejectedCost;
  return c;
}

}  // namespace

TEST_SUITE("regulator") {

TEST_CASE("each cost term against hand arithmetic") {
  const auto p = baseline_params();
  const num::TimeGrid g(20.0, 730);
  const auto sol = synthetic(p, g, 30.0, 4e5);
  const RegulatorPolicy pol{50.0, 1000.0};
  CHECK(regulator_cost(weights(0, 0, 0, 0, 0), pol, sol, p, g) == 0.0);
  CHECK(regulator_cost(weights(0, 0, 1, 0, 0), pol, sol, p, g) == 2500.0);
  CHECK(regulator_cost(weights(0, 0, 0, 0, 0.25), pol, sol, p, g) == 250000.0);
  CHECK(regulator_cost(weights(0, 0, 0, 0.01, 0), pol, sol, p, g) ==
        doctest::Approx(0.01 * 900.0 * 20.0).epsilon(1e-12));
  CHECK(regulator_cost(weights(0, 3.3, 0, 0, 0), pol, sol, p, g) ==
        doctest::Approx(-3.3 * 50.0 * 4e5).epsilon(1e-14));
  auto a1 = weights(1, 0, 0, 0, 0);
  a1.pbar_target = 3e5;
  CHECK(regulator_cost(a1, pol, sol, p, g) == doctest::Approx(1e5).epsilon(1e-14));
  a1.pbar_target = 5e5;
  CHECK(regulator_cost(a1, pol, sol, p, g) == 0.0);
  const auto all = weights(1, 3.3, 500, 0.01, 0.25);
  CHECK(regulator_cost(all, pol, sol, p, g) ==
        doctest::Approx(4e5 - 3.3 * 50 * 4e5 + 500 * 2500 + 0.01 * 900 * 20 + 0.25 * 1e6)
            .epsilon(1e-12));
}

TEST_CASE("revenue term alone is nonincreasing in the tax") {
  const auto p = baseline_params();
  const num::TimeGrid g(20.0, 730);
  const auto sol = synthetic(p, g, 0.0, 1e4);
  const auto reg = weights(0, 3.3, 0, 0, 0);
  double prev = kInf;
  for (double tau : {0.0, 10.0, 50.0, 100.0}) {
    const double j = regulator_cost(reg, {tau, 10.0}, sol, p, g);
    CHECK(j <= prev);
    prev = j;
  }
}

TEST_CASE("walk-away is strict and non-converged producers always reject") {
  auto reg = weights(0, 0, 0, 0, 0);
  reg.walkaway_threshold = 100.0;
  CHECK(accept_contract(99.0, true, reg));
  CHECK_FALSE(accept_contract(100.0, true, reg));
  CHECK_FALSE(accept_contract(99.0, false, reg));
  reg.walkaway_threshold = kInf;
  CHECK(accept_contract(1e300, true, reg));
}

TEST_CASE("parameter validation") {
  auto reg = weights(1, 1, 1, 1, 1);
  CHECK_NOTHROW(reg.validate());
  reg.alpha2 = -1.0;
  CHECK_THROWS_AS(reg.validate(), SolverError);
  reg = weights(1, 1, 1, 1, 1);
  reg.tau_grid = {0.0, 10.0, 10.0};
  CHECK_THROWS_AS(reg.validate(), SolverError);
  reg = weights(1, 1, 1, 1, 1);
  reg.pbar0 = 5.0;
  reg.pbar_target = 1.0;
  CHECK_THROWS_AS(reg.validate(), SolverError);
  reg = weights(1, 1, 1, 1, 1);
  reg.c2_grid.clear();
  CHECK_THROWS_AS(reg.validate(), SolverError);
}

TEST_CASE("argmin skips rejected cells and breaks ties by tau then c2") {
  std::vector<StackelbergCell> t{cell(0, 50, -1.0, false), cell(0, 100, 5.0),
                                 cell(10, 50, 2.0), cell(10, 100, 2.0)};
  CHECK(stackelberg_argmin(t).value() == 2);
  t[0] = cell(0, 50, -1.0);
  CHECK(stackelberg_argmin(t).value() == 0);
  std::vector<StackelbergCell> ties{cell(10, 50, 2.0), cell(10, 100, 1.0), cell(20, 50, 1.0)};
  CHECK(stackelberg_argmin(ties).value() == 1);
  std::vector<StackelbergCell> none{cell(0, 50, 0.0, false), cell(0, 100, 0.0, false)};
  CHECK_FALSE(stackelberg_argmin(none).has_value());
}

TEST_CASE("a one-cell grid returns that cell; an empty acceptance region throws") {
  const auto p = baseline_params();
  const num::TimeGrid g(2.0, 73);
  auto reg = weights(1, 3.3, 500, 0.01, 0.25);
  reg.tau_grid = {25.0};
  reg.c2_grid = {500.0};
  const auto res = stackelberg_eq(p, reg, g, {}, StackelbergKind::kMFC);
  CHECK(res.argmin == 0);
  CHECK(res.policy_hat.tau == 25.0);
  CHECK(res.J_hat == res.table[0].J);
  CHECK(std::isfinite(res.J_hat));

  reg.walkaway_threshold = -kInf;
  try {
    stackelberg_eq(p, reg, g, {}, StackelbergKind::kMFG);
    FAIL("expected AllRejected");
  } catch (const SolverError& e) {
    CHECK(e.code() == ErrorCode::kAllRejected);
  }
}

TEST_CASE("policy table is identical for any worker count") {
  const auto p = baseline_params();
  const num::TimeGrid g(2.0, 73);
  auto reg = weights(1, 3.3, 500, 0.01, 0.25);
  reg.tau_grid = {0.0, 50.0, 100.0};
  reg.c2_grid = {50.0, 1000.0};
  for (auto kind : {StackelbergKind::kMFC, StackelbergKind::kMFG}) {
    const auto a = evaluate_policy_table(p, reg, g, {}, kind, 1);
    const auto b = evaluate_policy_table(p, reg, g, {}, kind, 3);
    REQUIRE(a.size() == 6);
    REQUIRE(b.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].policy.tau == reg.tau_grid[i / 2]);
      CHECK(a[i].policy.c2 == reg.c2_grid[i % 2]);
      CHECK(a[i].J == b[i].J);
      CHECK(a[i].producer.cost_hat == b[i].producer.cost_hat);
      CHECK(a[i].producer.r_e_hat == b[i].producer.r_e_hat);
    }
  }
}

}  // TEST_SUITE
