#pragma once

// Small dense linear algebra, fixed-step ODE stepping and quadrature shared by
// the solvers. Nothing in here knows about the electricity model.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "carbonmfg/errors.hpp"

namespace carbonmfg::num {

using MatrixX = Eigen::MatrixXd;
using VectorX = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Uniform grid t_k = k * dt on [0, T]; the last node is pinned to T.
class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps);

  double horizon() const noexcept { return horizon_; }
  int n_steps() const noexcept { return n_steps_; }
  int n_nodes() const noexcept { return n_steps_ + 1; }
  double dt() const noexcept { return dt_; }
  double t(int k) const noexcept {
    return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt_;
  }

  bool operator==(const TimeGrid& other) const noexcept {
    return horizon_ == other.horizon_ && n_steps_ == other.n_steps_;
  }

 private:
  double horizon_;
  int n_steps_;
  double dt_;
};

inline bool all_finite(double x) { return std::isfinite(x); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// Pivoted LU solve. Throws kSingularMatrix when a pivot of U is below
// 1e-14 * ||A||_inf, and kNonFinite on non-finite input or output.
VectorX solve_linear(const MatrixX& system, const VectorX& rhs);

// Sparse pivoted LU for the large banded block systems. Same error contract
// as solve_linear.
VectorX solve_sparse(const SparseMatrix& system, const VectorX& rhs);

// Classical RK4 stepping from t_n down to t_0. `field(t, y)` returns dy/dt.
// Each grid interval is split into `substeps` equal RK4 steps; `post` is
// applied to the state after every step (used to re-symmetrize matrices).
template <class Y, class Field, class Post>
std::vector<Y> rk4_backward(const Y& terminal, Field&& field,
                            const TimeGrid& grid, int substeps, Post&& post) {
  if (substeps < 1) {
    throw SolverError(ErrorCode::kInvalidParams, "rk4 substeps must be >= 1");
  }
  if (!all_finite(terminal)) {
    throw SolverError(ErrorCode::kNonFinite, "rk4 terminal value not finite");
  }
  const int n = grid.n_steps();
  std::vector<Y> out(static_cast<std::size_t>(n + 1), terminal);
  Y y = terminal;
  for (int k = n; k > 0; --k) {
    const double t_hi = grid.t(k);
    const double h = -(t_hi - grid.t(k - 1)) / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t = t_hi + s * h;
      const Y k1 = field(t, y);
      const Y k2 = field(t + 0.5 * h, Y(y + (0.5 * h) * k1));
      const Y k3 = field(t + 0.5 * h, Y(y + (0.5 * h) * k2));
      const Y k4 = field(t + h, Y(y + h * k3));
      y = post(Y(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
      if (!all_finite(y)) {
        throw SolverError(ErrorCode::kNonFinite,
                          "rk4_backward left the finite range near t=" +
                              std::to_string(t + h));
      }
    }
    out[static_cast<std::size_t>(k - 1)] = y;
  }
  return out;
}

template <class Y, class Field>
std::vector<Y> rk4_backward(const Y& terminal, Field&& field,
                            const TimeGrid& grid, int substeps = 1) {
  return rk4_backward(terminal, std::forward<Field>(field), grid, substeps,
                      [](const Y& y) { return y; });
}

template <class Y, class Field>
std::vector<Y> rk4_forward(const Y& initial, Field&& field,
                           const TimeGrid& grid, int substeps = 1) {
  if (substeps < 1) {
    throw SolverError(ErrorCode::kInvalidParams, "rk4 substeps must be >= 1");
  }
  const int n = grid.n_steps();
  std::vector<Y> out(static_cast<std::size_t>(n + 1), initial);
  Y y = initial;
  for (int k = 0; k < n; ++k) {
    const double t_lo = grid.t(k);
    const double h = (grid.t(k + 1) - t_lo) / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t = t_lo + s * h;
      const Y k1 = field(t, y);
      const Y k2 = field(t + 0.5 * h, Y(y + (0.5 * h) * k1));
      const Y k3 = field(t + 0.5 * h, Y(y + (0.5 * h) * k2));
      const Y k4 = field(t + h, Y(y + h * k3));
      y = Y(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
      if (!all_finite(y)) {
        throw SolverError(ErrorCode::kNonFinite,
                          "rk4_forward left the finite range");
      }
    }
    out[static_cast<std::size_t>(k + 1)] = y;
  }
  return out;
}

// Composite trapezoidal rule over the grid; one value per node.
double trapezoid(std::span<const double> values, const TimeGrid& grid);

struct PsdReport {
  MatrixX symmetric;
  double min_eigenvalue = 0.0;
  bool psd = true;
};

// (M + M^T)/2 with its smallest eigenvalue; psd is false when that eigenvalue
// is below -tol.
PsdReport psd_report(const MatrixX& m, double tol);

// Throwing form: returns the symmetrized matrix or raises kNotPSD.
MatrixX symmetrize_and_check_psd(const MatrixX& m, double tol);

// exp(M) by scaling and squaring (Eigen's Pade implementation).
MatrixX matrix_exponential(const MatrixX& m);

}  // namespace carbonmfg::num
