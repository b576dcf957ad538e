#pragma once

#include <Eigen/Dense>

#include <vector>

#include "carbonmfg/numkernel.hpp"

namespace carbonmfg {

inline constexpr int kStateDim = 5;

using Vec5 = Eigen::Matrix<double, kStateDim, 1>;
using Mat5 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Mat52 = Eigen::Matrix<double, kStateDim, 2>;

// State ordering used everywhere: X = [Q, S, E, P, Ntilde].
enum StateIndex : int {
  kProduction = 0,   // Q, instantaneous production (MWh)
  kIrradiance = 1,   // S, OU irradiance factor
  kEmission = 2,     // E, instantaneous emission rate
  kPollution = 3,    // P, cumulative pollution
  kFuel = 4,         // Ntilde, cumulative nonrenewable (fuel) rate
};

// Calibrated producer constants. Quantities quoted per time step in the
// calibration table (p1, rho0, rho1) are stored here as rates per unit time.
struct ProducerParams {
  double c1 = 0.0;      // ramping cost
  double c3 = 0.0;      // revenue scale
  double p1 = 0.0;      // fuel price rate
  double p2 = 0.0;      // price per unit of renewable investment
  double rho0 = 0.0;    // inverse demand intercept rate
  double rho1 = 0.0;    // inverse demand slope rate
  double kappa1 = 0.0;  // MWh per fuel unit
  double kappa2 = 0.0;  // MWh per unit of R_e
  double alpha = 0.0;   // seasonality angular frequency
  double theta = 0.0;   // irradiance mean level
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  double delta = 0.0;   // emission per fuel rate
  double demand_base = 0.0;
  double demand_amplitude = 0.0;
  double demand_frequency = 0.0;
  Vec5 xbar0 = Vec5::Zero();
  Vec5 var0 = Vec5::Zero();
  double re_lower = 0.0;
  double re_upper = 0.0;

  // Throws kInvalidParams naming the first violated constraint.
  void validate() const;
};

// Calibration-table values with per-step prices divided by `dt` (years).
ProducerParams baseline_producer_params(double dt);

struct RegulatorPolicy {
  double tau = 0.0;  // carbon tax on squared terminal pollution
  double c2 = 0.0;   // demand-mismatch penalty

  void validate() const;
};

double demand(const ProducerParams& params, double t);

// Matrix form of the representative producer's LQ problem for a fixed R_e
// and regulator policy:
//   dX = (A X + B N + C_t) dt + Sigma dW
//   cost = E[ int R/2 N^2 + H_t'X + Xbar'F X + X'G X + J_t dt + X_T'S_T X_T ]
//          + p2 R_e
class StateSpace {
 public:
  StateSpace(const ProducerParams& params, const RegulatorPolicy& policy,
             double r_e, const num::TimeGrid& grid);

  Vec5 C(double t) const;
  // Exact integral of C over [t0, t1]; the mean-field stencils use it so the
  // seasonal term accumulates to kappa2 R_e sin(alpha t) with no aliasing.
  Vec5 C_integral(double t0, double t1) const;
  Vec5 H(double t) const;
  double J(double t) const;

  const Mat5& A() const noexcept { return A_; }
  const Vec5& B() const noexcept { return B_; }
  const Mat52& Sigma() const noexcept { return Sigma_; }
  const Mat5& a() const noexcept { return a_; }
  const Mat5& F() const noexcept { return F_; }
  const Mat5& G() const noexcept { return G_; }
  const Mat5& S_T() const noexcept { return S_T_; }
  double R() const noexcept { return R_; }
  // B R^{-1} B^T, the gain Gramian that appears in every Riccati term.
  const Mat5& BRinvBt() const noexcept { return BRinvBt_; }

  double r_e() const noexcept { return r_e_; }
  const num::TimeGrid& grid() const noexcept { return grid_; }
  const ProducerParams& params() const noexcept { return params_; }
  const RegulatorPolicy& policy() const noexcept { return policy_; }

 private:
  ProducerParams params_;
  RegulatorPolicy policy_;
  double r_e_;
  num::TimeGrid grid_;
  Mat5 A_;
  Vec5 B_;
  Mat52 Sigma_;
  Mat5 a_;
  Mat5 F_;
  Mat5 G_;
  Mat5 S_T_;
  double R_;
  Mat5 BRinvBt_;
};

inline StateSpace build_state_space(const ProducerParams& params,
                                    const RegulatorPolicy& policy, double r_e,
                                    const num::TimeGrid& grid) {
  return StateSpace(params, policy, r_e, grid);
}

struct ProductionDecomposition {
  std::vector<double> renewable;
  std::vector<double> nonrenewable;
  std::vector<double> total;
};

// Splits the mean production path into its fuel-driven and renewable parts.
// Throws kDecompositionMismatch when renewable + nonrenewable does not
// reproduce Xbar_Q to 1e-6 relative.
ProductionDecomposition production_decomposition(
    const std::vector<Vec5>& xbar, const ProducerParams& params, double r_e,
    const num::TimeGrid& grid);

}  // namespace carbonmfg
