#include "carbonmfg/lqsolver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace carbonmfg {

namespace {

using Mat10 = Eigen::Matrix<double, 2 * kStateDim, 2 * kStateDim>;

void require_nodes(std::size_t size, const num::TimeGrid& grid,
                   const char* what) {
  if (static_cast<int>(size) != grid.n_nodes()) {
    throw SolverError(ErrorCode::kInvalidParams,
                      std::string(what) + " must have one entry per grid node");
  }
}

Mat5 riccati_field(const StateSpace& ss, const Mat5& eta) {
  return eta * ss.BRinvBt() * eta - ss.A().transpose() * eta - eta * ss.A() -
         2.0 * ss.G();
}

Mat5 symmetrized(const Mat5& m) { return 0.5 * (m + m.transpose()); }

Mat5 coupling_matrix(const StateSpace& ss, MeanFieldKind kind) {
  return kind == MeanFieldKind::kMFG ? Mat5(ss.F().transpose())
                                     : Mat5(ss.F() + ss.F().transpose());
}

void check_psd_nodes(const std::vector<Mat5>& eta, double tol) {
  for (std::size_t k = 0; k < eta.size(); ++k) {
    const Mat5& m = eta[k];
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat5> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    if (lo < -tol * scale) {
      throw SolverError(ErrorCode::kNotPSD,
                        "eta at node " + std::to_string(k) +
                            " has eigenvalue " + std::to_string(lo));
    }
  }
}

std::vector<Mat5> hamiltonian_flow(const StateSpace& ss) {
  const auto& grid = ss.grid();
  const int n = grid.n_steps();
  Mat10 m;
  m << ss.A(), -ss.BRinvBt(), -2.0 * ss.G(), -ss.A().transpose();

  // Substeps keep exp(|Re lambda| h) moderate so the fractional transform
  // stays well conditioned.
  Eigen::EigenSolver<Mat10> eig(m, false);
  const double abscissa = eig.eigenvalues().real().cwiseAbs().maxCoeff();
  const double h = grid.dt();
  const int substeps =
      std::max(1, static_cast<int>(std::ceil(abscissa * h / 2.0)));
  const Mat10 step = num::matrix_exponential(-m * (h / substeps));

  std::vector<Mat5> eta(static_cast<std::size_t>(n + 1));
  Mat5 y = 2.0 * ss.S_T();
  eta[static_cast<std::size_t>(n)] = y;
  for (int k = n; k > 0; --k) {
    for (int s = 0; s < substeps; ++s) {
      const Mat5 top =
          step.topLeftCorner<5, 5>() + step.topRightCorner<5, 5>() * y;
      const Mat5 bottom =
          step.bottomLeftCorner<5, 5>() + step.bottomRightCorner<5, 5>() * y;
      // eta = bottom * top^{-1}  <=>  top^T eta^T = bottom^T
      y = symmetrized(top.transpose().partialPivLu().solve(bottom.transpose())
                          .transpose());
      if (!y.allFinite()) {
        throw SolverError(ErrorCode::kRiccatiBlowup,
                          "Riccati flow left the finite range near t=" +
                              std::to_string(grid.t(k)));
      }
    }
    eta[static_cast<std::size_t>(k - 1)] = y;
  }
  return eta;
}

}  // namespace

const char* to_string(MeanFieldKind kind) {
  return kind == MeanFieldKind::kMFG ? "MFG" : "MFC";
}

RiccatiSolution solve_riccati(const StateSpace& ss,
                              const RiccatiOptions& options) {
  RiccatiSolution out;
  if (options.method == RiccatiMethod::kHamiltonianFlow) {
    out.eta = hamiltonian_flow(ss);
  } else {
    try {
      out.eta = num::rk4_backward<Mat5>(
          2.0 * ss.S_T(),
          [&ss](double, const Mat5& eta) { return riccati_field(ss, eta); },
          ss.grid(), options.rk4_substeps,
          [](const Mat5& eta) { return symmetrized(eta); });
    } catch (const SolverError& e) {
      if (e.code() == ErrorCode::kNonFinite) {
        throw SolverError(ErrorCode::kRiccatiBlowup, e.what());
      }
      throw;
    }
  }
  // Terminal condition is exact by construction.
  out.eta.back() = 2.0 * ss.S_T();
  check_psd_nodes(out.eta, options.psd_tol);
  return out;
}

std::vector<Vec5> solve_r(const StateSpace& ss, const RiccatiSolution& riccati,
                          std::span<const Vec5> xbar, MeanFieldKind kind) {
  const auto& grid = ss.grid();
  require_nodes(riccati.eta.size(), grid, "eta");
  require_nodes(xbar.size(), grid, "xbar");
  const int n = grid.n_steps();
  const Mat5 coupling = coupling_matrix(ss, kind);
  const Mat5 at = ss.A().transpose();
  const Mat5 id = Mat5::Identity();

  auto forcing = [&](int k) -> Vec5 {
    const double t = grid.t(k);
    const auto i = static_cast<std::size_t>(k);
    return riccati.eta[i] * ss.C(t) + ss.H(t) + coupling * xbar[i];
  };

  std::vector<Vec5> r(static_cast<std::size_t>(n + 1), Vec5::Zero());
  Vec5 f_hi = forcing(n);
  for (int k = n - 1; k >= 0; --k) {
    const double h = grid.t(k + 1) - grid.t(k);
    const auto i = static_cast<std::size_t>(k);
    const Mat5 l_lo = at - riccati.eta[i] * ss.BRinvBt();
    const Mat5 l_hi = at - riccati.eta[i + 1] * ss.BRinvBt();
    const Vec5 f_lo = forcing(k);
    const Vec5 rhs = (id + 0.5 * h * l_hi) * r[i + 1] + 0.5 * h * (f_lo + f_hi);
    r[i] = (id - 0.5 * h * l_lo).partialPivLu().solve(rhs);
    if (!r[i].allFinite()) {
      throw SolverError(ErrorCode::kNonFinite, "adjoint r not finite");
    }
    f_hi = f_lo;
  }
  return r;
}

std::vector<Vec5> solve_xbar(const StateSpace& ss,
                             const RiccatiSolution& riccati,
                             std::span<const Vec5> r,
                             std::span<const double> control_shift) {
  const auto& grid = ss.grid();
  require_nodes(riccati.eta.size(), grid, "eta");
  require_nodes(r.size(), grid, "r");
  if (!control_shift.empty()) require_nodes(control_shift.size(), grid, "shift");
  const int n = grid.n_steps();
  const Mat5& s = ss.BRinvBt();
  const Mat5 id = Mat5::Identity();

  std::vector<Vec5> xbar(static_cast<std::size_t>(n + 1));
  xbar[0] = ss.params().xbar0;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double t0 = grid.t(k);
    const double t1 = grid.t(k + 1);
    const double h = t1 - t0;
    const Mat5 k_lo = ss.A() - s * riccati.eta[i];
    const Mat5 k_hi = ss.A() - s * riccati.eta[i + 1];
    Vec5 rhs = (id + 0.5 * h * k_lo) * xbar[i] -
               0.5 * h * s * (r[i] + r[i + 1]) + ss.C_integral(t0, t1);
    if (!control_shift.empty()) {
      rhs += 0.5 * h * ss.B() * (control_shift[i] + control_shift[i + 1]);
    }
    xbar[i + 1] = (id - 0.5 * h * k_hi).partialPivLu().solve(rhs);
    if (!xbar[i + 1].allFinite()) {
      throw SolverError(ErrorCode::kNonFinite, "mean field not finite");
    }
  }
  return xbar;
}

CoupledSolution solve_coupled_mfc(const StateSpace& ss,
                                  const RiccatiSolution& riccati) {
  const auto& grid = ss.grid();
  require_nodes(riccati.eta.size(), grid, "eta");
  const int n = grid.n_steps();
  const int d = kStateDim;
  const int nodes = n + 1;
  const int unknowns = 2 * d * nodes;
  // Unknown layout: Xbar_k at [d k, d k + d), r_k at [d nodes + d k, ...).
  auto xcol = [&](int k) { return d * k; };
  auto rcol = [&](int k) { return d * nodes + d * k; };

  const Mat5& s = ss.BRinvBt();
  const Mat5 at = ss.A().transpose();
  const Mat5 coupling = coupling_matrix(ss, MeanFieldKind::kMFC);
  const Mat5 id = Mat5::Identity();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 8 * d * d + 4 * d);
  num::VectorX rhs = num::VectorX::Zero(unknowns);

  auto put = [&](int row, int col, const Mat5& block) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (block(i, j) != 0.0) triplets.emplace_back(row + i, col + j, block(i, j));
      }
    }
  };

  int row = 0;
  put(row, xcol(0), id);
  rhs.segment(row, d) = ss.params().xbar0;
  row += d;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double t0 = grid.t(k);
    const double t1 = grid.t(k + 1);
    const double h = t1 - t0;
    const Mat5& eta_lo = riccati.eta[i];
    const Mat5& eta_hi = riccati.eta[i + 1];

    // Xbar_{k+1} - Xbar_k - h/2 [K_k Xbar_k + K_{k+1} Xbar_{k+1}
    //                            - S r_k - S r_{k+1}] = int C
    put(row, xcol(k), -(id + 0.5 * h * (ss.A() - s * eta_lo)));
    put(row, xcol(k + 1), id - 0.5 * h * (ss.A() - s * eta_hi));
    put(row, rcol(k), 0.5 * h * s);
    put(row, rcol(k + 1), 0.5 * h * s);
    rhs.segment(row, d) = ss.C_integral(t0, t1);
    row += d;

    // r_k - r_{k+1} - h/2 [L_k r_k + L_{k+1} r_{k+1}
    //                      + F_c (Xbar_k + Xbar_{k+1})] = h/2 (g_k + g_{k+1})
    put(row, rcol(k), id - 0.5 * h * (at - eta_lo * s));
    put(row, rcol(k + 1), -(id + 0.5 * h * (at - eta_hi * s)));
    put(row, xcol(k), -0.5 * h * coupling);
    put(row, xcol(k + 1), -0.5 * h * coupling);
    rhs.segment(row, d) =
        0.5 * h * (eta_lo * ss.C(t0) + ss.H(t0) + eta_hi * ss.C(t1) + ss.H(t1));
    row += d;
  }
  put(row, rcol(n), id);
  row += d;

  num::SparseMatrix system(unknowns, unknowns);
  system.setFromTriplets(triplets.begin(), triplets.end());
  const num::VectorX z = num::solve_sparse(system, rhs);

  CoupledSolution out;
  out.xbar.resize(static_cast<std::size_t>(nodes));
  out.r.resize(static_cast<std::size_t>(nodes));
  for (int k = 0; k < nodes; ++k) {
    out.xbar[static_cast<std::size_t>(k)] = z.segment<kStateDim>(xcol(k));
    out.r[static_cast<std::size_t>(k)] = z.segment<kStateDim>(rcol(k));
  }
  // Boundary rows are exact by construction; pin them to remove round-off.
  out.xbar.front() = ss.params().xbar0;
  out.r.back().setZero();
  return out;
}

double compute_s0(const StateSpace& ss, const RiccatiSolution& riccati,
                  std::span<const Vec5> r) {
  const auto& grid = ss.grid();
  require_nodes(riccati.eta.size(), grid, "eta");
  require_nodes(r.size(), grid, "r");
  std::vector<double> integrand(static_cast<std::size_t>(grid.n_nodes()));
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double t = grid.t(k);
    integrand[i] = (ss.a() * riccati.eta[i]).trace() -
                   0.5 * r[i].dot(ss.BRinvBt() * r[i]) + ss.C(t).dot(r[i]) +
                   ss.J(t);
  }
  return ss.params().p2 * ss.r_e() + num::trapezoid(integrand, grid);
}

double analytic_cost(const StateSpace& ss, const MeanFieldSolution& sol) {
  const Vec5& x0 = ss.params().xbar0;
  const Mat5& eta0 = sol.riccati->eta.front();
  double cost = 0.5 * ((eta0.diagonal().cwiseProduct(ss.params().var0)).sum() +
                       x0.dot(eta0 * x0)) +
                x0.dot(sol.r.front()) + sol.s0;
  if (sol.kind == MeanFieldKind::kMFC) {
    const auto& grid = ss.grid();
    require_nodes(sol.xbar.size(), grid, "xbar");
    std::vector<double> quad(sol.xbar.size());
    for (std::size_t k = 0; k < quad.size(); ++k) {
      quad[k] = sol.xbar[k].dot(ss.F() * sol.xbar[k]);
    }
    cost -= num::trapezoid(quad, grid);
  }
  return cost;
}

double feedback_control(const StateSpace& ss, const RiccatiSolution& riccati,
                        std::span<const Vec5> r, const Vec5& x, int k) {
  const auto i = static_cast<std::size_t>(k);
  return -ss.B().dot(riccati.eta[i] * x + r[i]) / ss.R();
}

std::vector<double> mean_control(const StateSpace& ss,
                                 const RiccatiSolution& riccati,
                                 std::span<const Vec5> r,
                                 std::span<const Vec5> xbar) {
  std::vector<double> out(xbar.size());
  for (std::size_t k = 0; k < xbar.size(); ++k) {
    out[k] = feedback_control(ss, riccati, r, xbar[k], static_cast<int>(k));
  }
  return out;
}

BestResponse best_response_mfg(const StateSpace& ss, RiccatiPtr riccati,
                               std::span<const Vec5> xbar_fixed) {
  BestResponse out;
  MeanFieldSolution& sol = out.solution;
  sol.kind = MeanFieldKind::kMFG;
  sol.riccati = std::move(riccati);
  sol.r = solve_r_mfg(ss, *sol.riccati, xbar_fixed);
  sol.s0 = compute_s0(ss, *sol.riccati, sol.r);
  sol.r_e = ss.r_e();
  sol.policy = ss.policy();
  sol.analytic_cost = analytic_cost(ss, sol);
  out.cost = sol.analytic_cost;
  sol.xbar = solve_xbar(ss, *sol.riccati, sol.r);
  return out;
}

MeanFieldSolution solve_mfc(const StateSpace& ss, RiccatiPtr riccati) {
  MeanFieldSolution sol;
  sol.kind = MeanFieldKind::kMFC;
  sol.riccati = std::move(riccati);
  if (ss.F().isZero(0.0)) {
    // No price interaction: the block system decouples into the backward r
    // sweep and the forward Xbar sweep, the same two solves as the game.
    const std::vector<Vec5> unused(static_cast<std::size_t>(ss.grid().n_nodes()),
                                   ss.params().xbar0);
    sol.r = solve_r(ss, *sol.riccati, unused, MeanFieldKind::kMFC);
    sol.xbar = solve_xbar(ss, *sol.riccati, sol.r);
  } else {
    CoupledSolution coupled = solve_coupled_mfc(ss, *sol.riccati);
    sol.r = std::move(coupled.r);
    sol.xbar = std::move(coupled.xbar);
  }
  sol.s0 = compute_s0(ss, *sol.riccati, sol.r);
  sol.r_e = ss.r_e();
  sol.policy = ss.policy();
  sol.analytic_cost = analytic_cost(ss, sol);
  return sol;
}

double r_stencil_residual(const StateSpace& ss, const RiccatiSolution& riccati,
                          std::span<const Vec5> r, std::span<const Vec5> xbar,
                          MeanFieldKind kind) {
  const auto& grid = ss.grid();
  const Mat5 coupling = coupling_matrix(ss, kind);
  const Mat5 at = ss.A().transpose();
  double worst = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double t0 = grid.t(k);
    const double t1 = grid.t(k + 1);
    const double h = t1 - t0;
    const Vec5 lo = (at - riccati.eta[i] * ss.BRinvBt()) * r[i];
    const Vec5 hi = (at - riccati.eta[i + 1] * ss.BRinvBt()) * r[i + 1];
    const Vec5 f_lo = riccati.eta[i] * ss.C(t0) + ss.H(t0) + coupling * xbar[i];
    const Vec5 f_hi =
        riccati.eta[i + 1] * ss.C(t1) + ss.H(t1) + coupling * xbar[i + 1];
    const Vec5 res = r[i] - r[i + 1] - 0.5 * h * (lo + hi + f_lo + f_hi);
    const double scale =
        std::max({r[i].cwiseAbs().maxCoeff(), r[i + 1].cwiseAbs().maxCoeff(),
                  0.5 * h * (lo.cwiseAbs().maxCoeff() + hi.cwiseAbs().maxCoeff() +
                             f_lo.cwiseAbs().maxCoeff() +
                             f_hi.cwiseAbs().maxCoeff()),
                  1e-300});
    worst = std::max(worst, res.cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

double xbar_stencil_residual(const StateSpace& ss,
                             const RiccatiSolution& riccati,
                             std::span<const Vec5> r,
                             std::span<const Vec5> xbar) {
  const auto& grid = ss.grid();
  const Mat5& s = ss.BRinvBt();
  double worst = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double t0 = grid.t(k);
    const double t1 = grid.t(k + 1);
    const double h = t1 - t0;
    const Vec5 lo = (ss.A() - s * riccati.eta[i]) * xbar[i] - s * r[i];
    const Vec5 hi = (ss.A() - s * riccati.eta[i + 1]) * xbar[i + 1] - s * r[i + 1];
    const Vec5 forcing = ss.C_integral(t0, t1);
    const Vec5 res = xbar[i + 1] - xbar[i] - 0.5 * h * (lo + hi) - forcing;
    const double scale = std::max(
        {xbar[i].cwiseAbs().maxCoeff(), xbar[i + 1].cwiseAbs().maxCoeff(),
         0.5 * h * (lo.cwiseAbs().maxCoeff() + hi.cwiseAbs().maxCoeff()),
         forcing.cwiseAbs().maxCoeff(), 1e-300});
    worst = std::max(worst, res.cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

}  // namespace carbonmfg
