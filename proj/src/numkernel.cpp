#include "carbonmfg/numkernel.hpp"

#include <Eigen/LU>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>

namespace carbonmfg::num {

namespace {

constexpr double kPivotRatio = 1e-14;

void check_residual(double residual, double rhs_norm) {
  // Pivoting keeps this far below the bound for anything non-singular; a
  // violation means the factorization silently lost the solution.
  if (!(residual <= 1e-10 * (1.0 + rhs_norm))) {
    throw SolverError(ErrorCode::kSingularMatrix,
                      "linear solve residual " + std::to_string(residual) +
                          " exceeds bound");
  }
}

}  // namespace

TimeGrid::TimeGrid(double horizon, int n_steps)
    : horizon_(horizon), n_steps_(n_steps), dt_(horizon / n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw SolverError(ErrorCode::kInvalidParams, "time horizon must be > 0");
  }
  if (n_steps < 2) {
    throw SolverError(ErrorCode::kInvalidParams, "time grid needs n_steps >= 2");
  }
}

VectorX solve_linear(const MatrixX& system, const VectorX& rhs) {
  if (system.rows() != system.cols() || system.rows() != rhs.size()) {
    throw SolverError(ErrorCode::kInvalidParams, "solve_linear: shape mismatch");
  }
  if (!system.allFinite() || !rhs.allFinite()) {
    throw SolverError(ErrorCode::kNonFinite, "solve_linear: non-finite input");
  }
  const double scale = system.rowwise().lpNorm<1>().maxCoeff();
  Eigen::PartialPivLU<MatrixX> lu(system);
  const MatrixX& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (std::abs(packed(i, i)) <= kPivotRatio * scale) {
      throw SolverError(ErrorCode::kSingularMatrix,
                        "pivot " + std::to_string(i) + " below threshold");
    }
  }
  VectorX x = lu.solve(rhs);
  if (!x.allFinite()) {
    throw SolverError(ErrorCode::kNonFinite, "solve_linear: non-finite result");
  }
  check_residual((system * x - rhs).lpNorm<Eigen::Infinity>(),
                 rhs.lpNorm<Eigen::Infinity>());
  return x;
}

VectorX solve_sparse(const SparseMatrix& system, const VectorX& rhs) {
  if (system.rows() != system.cols() || system.rows() != rhs.size()) {
    throw SolverError(ErrorCode::kInvalidParams, "solve_sparse: shape mismatch");
  }
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(system);
  lu.factorize(system);
  if (lu.info() != Eigen::Success) {
    throw SolverError(ErrorCode::kSingularMatrix,
                      "sparse LU failed: " + lu.lastErrorMessage());
  }
  VectorX x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    throw SolverError(ErrorCode::kSingularMatrix, "sparse LU solve failed");
  }
  // Two rounds of iterative refinement; the block systems mix scales badly.
  for (int round = 0; round < 2; ++round) {
    const VectorX correction = lu.solve(VectorX(rhs - system * x));
    if (!correction.allFinite()) break;
    x += correction;
  }
  check_residual((system * x - rhs).lpNorm<Eigen::Infinity>(),
                 rhs.lpNorm<Eigen::Infinity>());
  return x;
}

double trapezoid(std::span<const double> values, const TimeGrid& grid) {
  if (static_cast<int>(values.size()) != grid.n_nodes()) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "trapezoid: need one value per grid node");
  }
  double sum = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double h = grid.t(k + 1) - grid.t(k);
    sum += 0.5 * h * (values[static_cast<std::size_t>(k)] +
                      values[static_cast<std::size_t>(k + 1)]);
  }
  if (!std::isfinite(sum)) {
    throw SolverError(ErrorCode::kNonFinite, "trapezoid: non-finite integral");
  }
  return sum;
}

PsdReport psd_report(const MatrixX& m, double tol) {
  if (m.rows() != m.cols()) {
    throw SolverError(ErrorCode::kInvalidParams, "psd check needs a square matrix");
  }
  PsdReport report;
  report.symmetric = 0.5 * (m + m.transpose());
  if (report.symmetric.size() == 0) return report;
  Eigen::SelfAdjointEigenSolver<MatrixX> eig(report.symmetric,
                                             Eigen::EigenvaluesOnly);
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.psd = report.min_eigenvalue >= -tol;
  return report;
}

MatrixX symmetrize_and_check_psd(const MatrixX& m, double tol) {
  PsdReport report = psd_report(m, tol);
  if (!report.psd) {
    throw SolverError(ErrorCode::kNotPSD,
                      "smallest eigenvalue " +
                          std::to_string(report.min_eigenvalue));
  }
  return std::move(report.symmetric);
}

MatrixX matrix_exponential(const MatrixX& m) {
  MatrixX out = m.exp();
  if (!out.allFinite()) {
    throw SolverError(ErrorCode::kNonFinite, "matrix exponential overflowed");
  }
  return out;
}

}  // namespace carbonmfg::num
