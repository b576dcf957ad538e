#include <random>

#include "carbonmfg/numkernel.hpp"
#include "doctest.h"

using namespace carbonmfg;
using num::MatrixX;
using num::VectorX;

namespace {

// Textbook Gaussian elimination with partial pivoting, kept separate from
// the Eigen route so the two can check each other.
VectorX eliminate(MatrixX a, VectorX b) {
  const auto n = a.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    }
    a.row(col).swap(a.row(piv));
    std::swap(b(col), b(piv));
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (Eigen::Index c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b(r) -= f * b(col);
    }
  }
  VectorX x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double s = b(r);
    for (Eigen::Index c = r + 1; c < n; ++c) s -= a(r, c) * x(c);
    x(r) = s / a(r, r);
  }
  return x;
}

MatrixX random_matrix(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixX m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

}  // namespace

TEST_SUITE("numkernel") {

TEST_CASE("time grid pins the last node and rejects degenerate grids") {
  const num::TimeGrid g(20.0, 730);
  CHECK(g.n_nodes() == 731);
  CHECK(g.t(0) == 0.0);
  CHECK(g.t(730) == 20.0);
  CHECK(g.dt() == doctest::Approx(20.0 / 730).epsilon(1e-15));
  CHECK_THROWS_AS(num::TimeGrid(20.0, 1), SolverError);
  CHECK_THROWS_AS(num::TimeGrid(0.0, 10), SolverError);
}

TEST_CASE("solve_linear agrees with hand elimination") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 9;
    const MatrixX a = random_matrix(rng, n) + 3.0 * MatrixX::Identity(n, n);
    const VectorX b = random_matrix(rng, n).col(0);
    const VectorX x = num::solve_linear(a, b);
    const VectorX y = eliminate(a, b);
    CHECK((x - y).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + y.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("solve_linear reports singular and non-finite systems") {
  MatrixX a(3, 3);
  a << 1, 2, 3, 2, 4, 6, 1, 0, 1;
  const VectorX b = VectorX::Ones(3);
  try {
    num::solve_linear(a, b);
    FAIL("expected SingularMatrix");
  } catch (const SolverError& e) {
    CHECK(e.code() == ErrorCode::kSingularMatrix);
  }
  MatrixX bad = MatrixX::Identity(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(num::solve_linear(bad, VectorX::Ones(2)), SolverError);
}

TEST_CASE("solve_sparse agrees with the dense route") {
  std::mt19937_64 rng(11);
  const int n = 40;
  MatrixX dense = MatrixX::Zero(n, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    dense(i, i) = 4.0 + u(rng);
    if (i > 0) dense(i, i - 1) = u(rng);
    if (i + 3 < n) dense(i, i + 3) = u(rng);
  }
  const VectorX b = random_matrix(rng, n).col(1);
  const VectorX x = num::solve_sparse(dense.sparseView(), b);
  CHECK((x - eliminate(dense, b)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("trapezoid: exact error on t^2, second order on exp") {
  for (int n : {4, 16, 64}) {
    const num::TimeGrid g(3.0, n);
    std::vector<double> f(static_cast<std::size_t>(g.n_nodes()));
    for (int k = 0; k < g.n_nodes(); ++k) f[static_cast<std::size_t>(k)] = g.t(k) * g.t(k);
    // Composite trapezoid on t^2 overshoots by exactly T h^2 / 6.
    const double h = 3.0 / n;
    CHECK(num::trapezoid(f, g) == doctest::Approx(9.0 + 3.0 * h * h / 6.0).epsilon(1e-13));
  }
  double prev = 0.0;
  for (int n : {10, 20, 40, 80}) {
    const num::TimeGrid g(1.0, n);
    std::vector<double> f(static_cast<std::size_t>(g.n_nodes()));
    for (int k = 0; k < g.n_nodes(); ++k) f[static_cast<std::size_t>(k)] = std::exp(g.t(k));
    const double err = std::abs(num::trapezoid(f, g) - (std::exp(1.0) - 1.0));
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.01));
    prev = err;
  }
}

TEST_CASE("rk4 is fourth order forward and backward") {
  auto field = [](double t, const double& y) { return -2.0 * t * y; };
  double prev_f = 0.0;
  double prev_b = 0.0;
  for (int n : {40, 80, 160}) {
    const num::TimeGrid g(1.5, n);
    const auto fw = num::rk4_forward(1.0, field, g);
    const double err_f = std::abs(fw.back() - std::exp(-2.25));
    // Backward from y(T) = exp(-T^2) must return y(0) = 1.
    const auto bw = num::rk4_backward(std::exp(-2.25), field, g);
    const double err_b = std::abs(bw.front() - 1.0);
    if (prev_f > 0.0) {
      CHECK(std::log2(prev_f / err_f) == doctest::Approx(4.0).epsilon(0.05));
      CHECK(std::log2(prev_b / err_b) == doctest::Approx(4.0).epsilon(0.05));
    }
    prev_f = err_f;
    prev_b = err_b;
  }
  const num::TimeGrid g(1.0, 4);
  CHECK_THROWS_AS(num::rk4_forward(1.0, field, g, 0), SolverError);
}

TEST_CASE("psd check symmetrizes and flags indefinite matrices") {
  MatrixX m(2, 2);
  m << 2.0, 1.0, 0.0, 2.0;
  const auto rep = num::psd_report(m, 1e-12);
  CHECK(rep.psd);
  CHECK(rep.symmetric(0, 1) == 0.5);
  CHECK(rep.min_eigenvalue == doctest::Approx(1.5));
  MatrixX bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1e-3;
  CHECK_FALSE(num::psd_report(bad, 1e-6).psd);
  try {
    num::symmetrize_and_check_psd(bad, 1e-6);
    FAIL("expected NotPSD");
  } catch (const SolverError& e) {
    CHECK(e.code() == ErrorCode::kNotPSD);
  }
}

TEST_CASE("matrix exponential of a rotation generator") {
  const double w = 2.3;
  MatrixX m(2, 2);
  m << 0.0, -w, w, 0.0;
  const MatrixX e = num::matrix_exponential(m);
  CHECK(e(0, 0) == doctest::Approx(std::cos(w)).epsilon(1e-14));
  CHECK(e(1, 0) == doctest::Approx(std::sin(w)).epsilon(1e-14));
  CHECK(e(0, 1) == doctest::Approx(-std::sin(w)).epsilon(1e-14));
}

}  // TEST_SUITE
