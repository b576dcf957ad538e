#pragma once

// Riccati, adjoint and mean-field ODE solves for the representative producer
// and the closed-form expected costs built from them.
//
// Conventions (S = B R^{-1} B^T):
//   d eta/dt = eta S eta - A^T eta - eta A - 2G,          eta_T = 2 S_T
//   -dr/dt   = (A^T - eta S) r + eta C + H + F_c Xbar,    r_T = 0
//   dXbar/dt = (A - S eta) Xbar - S r + C,                Xbar_0 = xbar0
// with F_c = F^T for the game (MFG) and F + F^T for the planner (MFC).
//
// r and Xbar are discretized with the trapezoidal stencil on the solver grid;
// the explicit forcing C in the Xbar equation is integrated exactly over each
// interval. The same stencils are used for the residual diagnostics and for
// the block system of the coupled MFC problem.

#include <memory>
#include <span>
#include <vector>

#include "carbonmfg/model.hpp"

namespace carbonmfg {

enum class MeanFieldKind { kMFG, kMFC };

const char* to_string(MeanFieldKind kind);

enum class RiccatiMethod {
  // Exact propagation through the exponential of the Hamiltonian matrix
  // (linear fractional transform), substepped to keep each step well
  // conditioned. Stable for any step size.
  kHamiltonianFlow,
  // Classical RK4 with `rk4_substeps` steps per grid interval.
  kRK4,
};

struct RiccatiOptions {
  RiccatiMethod method = RiccatiMethod::kHamiltonianFlow;
  int rk4_substeps = 1;
  double psd_tol = 1e-8;
};

struct RiccatiSolution {
  std::vector<Mat5> eta;  // one per grid node
};

using RiccatiPtr = std::shared_ptr<const RiccatiSolution>;

// Throws kRiccatiBlowup if the integration leaves the finite range and
// kNotPSD if any node fails the eigenvalue check (tolerance scaled by
// max(1, |eta_k|_max)).
RiccatiSolution solve_riccati(const StateSpace& ss,
                              const RiccatiOptions& options = {});

std::vector<Vec5> solve_r(const StateSpace& ss, const RiccatiSolution& riccati,
                          std::span<const Vec5> xbar, MeanFieldKind kind);

inline std::vector<Vec5> solve_r_mfg(const StateSpace& ss,
                                     const RiccatiSolution& riccati,
                                     std::span<const Vec5> xbar) {
  return solve_r(ss, riccati, xbar, MeanFieldKind::kMFG);
}

// Forward mean-field solve. `control_shift` (optional, one value per node)
// is added to the mean feedback control; deviation tests use it.
std::vector<Vec5> solve_xbar(const StateSpace& ss,
                             const RiccatiSolution& riccati,
                             std::span<const Vec5> r,
                             std::span<const double> control_shift = {});

struct CoupledSolution {
  std::vector<Vec5> r;
  std::vector<Vec5> xbar;
};

// One-shot solve of the forward/backward MFC pair as a single sparse block
// system with boundary rows Xbar_0 = xbar0 and r_T = 0.
CoupledSolution solve_coupled_mfc(const StateSpace& ss,
                                  const RiccatiSolution& riccati);

double compute_s0(const StateSpace& ss, const RiccatiSolution& riccati,
                  std::span<const Vec5> r);

struct MeanFieldSolution {
  MeanFieldKind kind = MeanFieldKind::kMFG;
  RiccatiPtr riccati;
  std::vector<Vec5> r;
  std::vector<Vec5> xbar;
  double s0 = 0.0;
  double analytic_cost = 0.0;
  double r_e = 0.0;
  RegulatorPolicy policy;
};

// 1/2 (tr(eta_0 Cov X_0) + xbar0' eta_0 xbar0) + xbar0' r_0 + s0, minus
// int Xbar' F Xbar dt for the planner.
double analytic_cost(const StateSpace& ss, const MeanFieldSolution& sol);

// -R^{-1} B^T (eta_k x + r_k) at node k.
double feedback_control(const StateSpace& ss, const RiccatiSolution& riccati,
                        std::span<const Vec5> r, const Vec5& x, int k);

std::vector<double> mean_control(const StateSpace& ss,
                                 const RiccatiSolution& riccati,
                                 std::span<const Vec5> r,
                                 std::span<const Vec5> xbar);

// Best response to a frozen mean field: r against `xbar_fixed`, then the
// mean-field it induces, s0 and the MFG cost. The frozen field is kept as
// the solution's xbar only for the cost; `induced_xbar` returns the response.
struct BestResponse {
  MeanFieldSolution solution;  // xbar == induced mean field
  double cost = 0.0;
};
BestResponse best_response_mfg(const StateSpace& ss, RiccatiPtr riccati,
                               std::span<const Vec5> xbar_fixed);

// Full MFC solve for one R_e.
MeanFieldSolution solve_mfc(const StateSpace& ss, RiccatiPtr riccati);

// Largest relative residual of the trapezoidal stencils over all intervals.
double r_stencil_residual(const StateSpace& ss, const RiccatiSolution& riccati,
                          std::span<const Vec5> r, std::span<const Vec5> xbar,
                          MeanFieldKind kind);
double xbar_stencil_residual(const StateSpace& ss,
                             const RiccatiSolution& riccati,
                             std::span<const Vec5> r,
                             std::span<const Vec5> xbar);

}  // namespace carbonmfg
