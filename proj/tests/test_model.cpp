#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace carbonmfg;
using carbonmfg::testing::baseline_grid;
using carbonmfg::testing::baseline_params;

namespace {

// Running cost written out term by term from the producer's objective.
double running_cost_oracle(const ProducerParams& p, const RegulatorPolicy& pol,
                           const Vec5& x, const Vec5& xbar, double n, double t) {
  const double q = x(0);
  const double d = demand(p, t);
  const double price = p.rho0 + p.rho1 * (d - xbar(0));
  return p.c1 * n * n + p.p1 * x(4) + pol.c2 * (q - d) * (q - d) - p.c3 * price * q;
}

Vec5 drift_oracle(const ProducerParams& p, double r_e, const Vec5& x, double n, double t) {
  Vec5 out;
  out(0) = p.kappa1 * n + p.kappa2 * r_e * (p.alpha * std::cos(p.alpha * t) + p.theta - x(1));
  out(1) = p.theta - x(1);
  out(2) = p.delta * n;
  out(3) = x(2);
  out(4) = n;
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("baseline constants load with per-step prices converted to rates") {
  const double dt = 20.0 / 730;
  const ProducerParams p = baseline_params();
  CHECK(p.p1 * dt == doctest::Approx(7.0));
  CHECK(p.rho0 * dt == doctest::Approx(40.0));
  CHECK(p.rho1 * dt == doctest::Approx(0.1));
  CHECK(p.c1 == 1e-4);
  CHECK(p.p2 == 1e4);
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("validation rejects out-of-range constants") {
  auto broken = [](auto mutate) {
    ProducerParams p = baseline_params();
    mutate(p);
    return p;
  };
  CHECK_THROWS_AS(broken([](ProducerParams& p) { p.c1 = 0.0; }).validate(), SolverError);
  CHECK_THROWS_AS(broken([](ProducerParams& p) { p.rho1 = -1.0; }).validate(), SolverError);
  CHECK_THROWS_AS(broken([](ProducerParams& p) { p.var0(1) = -0.1; }).validate(), SolverError);
  CHECK_THROWS_AS(broken([](ProducerParams& p) { p.re_upper = -1.0; }).validate(), SolverError);
  CHECK_THROWS_AS((RegulatorPolicy{-1.0, 10.0}.validate()), SolverError);
  CHECK_THROWS_AS(StateSpace(baseline_params(), {50, 1000}, 2e4, baseline_grid()), SolverError);
}

TEST_CASE("matrix form reproduces the running cost and drift pointwise") {
  const ProducerParams p = baseline_params();
  const RegulatorPolicy pol{50.0, 1000.0};
  const double r_e = 37.5;
  const StateSpace ss(p, pol, r_e, baseline_grid());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1e3);
  for (int trial = 0; trial < 50; ++trial) {
    Vec5 x;
    Vec5 xbar;
    for (int i = 0; i < 5; ++i) {
      x(i) = z(rng);
      xbar(i) = z(rng);
    }
    const double n = z(rng);
    const double t = 20.0 * (trial + 0.37) / 50.0;
    const double matrix_form = 0.5 * ss.R() * n * n + ss.H(t).dot(x) +
                               xbar.dot(ss.F() * x) + x.dot(ss.G() * x) + ss.J(t);
    const double oracle = running_cost_oracle(p, pol, x, xbar, n, t);
    CHECK(matrix_form == doctest::Approx(oracle).epsilon(1e-12));
    const Vec5 drift = ss.A() * x + ss.B() * n + ss.C(t);
    CHECK((drift - drift_oracle(p, r_e, x, n, t)).cwiseAbs().maxCoeff() <=
          1e-9 * (1.0 + drift.cwiseAbs().maxCoeff()));
  }
  const Vec5 xt = Vec5::Constant(3.0);
  CHECK(xt.dot(ss.S_T() * xt) == doctest::Approx(pol.tau * 9.0));
  CHECK((ss.a() - ss.a().transpose()).norm() == 0.0);
  CHECK(ss.BRinvBt()(4, 4) == doctest::Approx(1.0 / (2.0 * p.c1)));
}

TEST_CASE("C_integral matches fine Simpson quadrature") {
  const StateSpace ss(baseline_params(), {50, 1000}, 412.0, baseline_grid());
  const double t0 = 3.1;
  const double t1 = t0 + 20.0 / 730;
  const int m = 2000;
  Vec5 simpson = Vec5::Zero();
  const double h = (t1 - t0) / m;
  for (int i = 0; i <= m; ++i) {
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    simpson += w * ss.C(t0 + i * h);
  }
  simpson *= h / 3.0;
  const Vec5 exact = ss.C_integral(t0, t1);
  CHECK((exact - simpson).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + exact.cwiseAbs().maxCoeff()));
}

TEST_CASE("production decomposition reconstructs consistent paths and flags mismatches") {
  const ProducerParams p = baseline_params();
  const num::TimeGrid g(2.0, 40);
  const double r_e = 80.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Vec5> xbar(static_cast<std::size_t>(g.n_nodes()), p.xbar0);
  for (int k = 1; k < g.n_nodes(); ++k) {
    Vec5& x = xbar[static_cast<std::size_t>(k)];
    x(4) = 100.0 * z(rng);
    x(1) = p.theta + z(rng);
    x(0) = p.xbar0(0) + p.kappa1 * (x(4) - p.xbar0(4)) +
           p.kappa2 * r_e * (std::sin(p.alpha * g.t(k)) + x(1) - p.xbar0(1));
  }
  const auto dec = production_decomposition(xbar, p, r_e, g);
  for (std::size_t k = 0; k < xbar.size(); ++k) {
    CHECK(dec.total[k] == doctest::Approx(xbar[k](0)).epsilon(1e-12));
    CHECK(dec.renewable[k] + dec.nonrenewable[k] == doctest::Approx(dec.total[k]));
  }
  xbar[7](0) += 1.0;
  try {
    production_decomposition(xbar, p, r_e, g);
    FAIL("expected DecompositionMismatch");
  } catch (const SolverError& e) {
    CHECK(e.code() == ErrorCode::kDecompositionMismatch);
  }
}

}  // TEST_SUITE
