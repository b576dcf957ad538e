#include "carbonmfg/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace carbonmfg {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw SolverError(ErrorCode::kInvalidParams, what);
}

}  // namespace

void ProducerParams::validate() const {
  require(c1 > 0.0, "c1 must be > 0");
  require(c3 > 0.0, "c3 must be > 0");
  require(rho0 > 0.0, "rho0 must be > 0");
  require(rho1 >= 0.0, "rho1 must be >= 0");
  require(kappa1 > 0.0, "kappa1 must be > 0");
  require(kappa2 > 0.0, "kappa2 must be > 0");
  require(theta > 0.0, "theta must be > 0");
  require(sigma0 >= 0.0, "sigma0 must be >= 0");
  require(sigma1 >= 0.0, "sigma1 must be >= 0");
  require(delta >= 0.0, "delta must be >= 0");
  require(p2 >= 0.0, "p2 must be >= 0");
  require(xbar0.allFinite(), "xbar0 must be finite");
  require(var0.allFinite() && (var0.array() >= 0.0).all(),
          "var0 entries must be >= 0");
  require(re_lower >= 0.0, "re_bounds lower bound must be >= 0");
  require(re_upper >= re_lower, "re_bounds must be nonempty");
  require(std::isfinite(p1) && std::isfinite(alpha) &&
              std::isfinite(demand_base) && std::isfinite(demand_amplitude) &&
              std::isfinite(demand_frequency),
          "producer constants must be finite");
}

ProducerParams baseline_producer_params(double dt) {
  ProducerParams p;
  p.c1 = 1e-4;
  p.c3 = 1.0;
  p.p1 = 7.0 / dt;
  p.p2 = 1e4;
  p.rho0 = 40.0 / dt;
  p.rho1 = 0.1 / dt;
  p.kappa1 = 0.13;
  p.kappa2 = 0.1;
  p.alpha = 40.0 * std::numbers::pi;
  p.theta = 5.0;
  p.sigma0 = 0.01;
  p.sigma1 = 0.01;
  p.delta = 0.15;
  p.demand_base = 2e4;
  p.demand_amplitude = 5e2;
  p.demand_frequency = 80.0 * std::numbers::pi;
  p.xbar0 << 0.0, p.theta, 0.0, 0.0, 0.0;
  p.var0 << 0.0, 0.1, 0.0, 0.0, 0.0;
  p.re_lower = 0.0;
  p.re_upper = 1e4;
  return p;
}

void RegulatorPolicy::validate() const {
  require(tau >= 0.0 && std::isfinite(tau), "tau must be >= 0");
  require(c2 >= 0.0 && std::isfinite(c2), "c2 must be >= 0");
}

double demand(const ProducerParams& params, double t) {
  return params.demand_base -
         params.demand_amplitude * std::cos(params.demand_frequency * t);
}

StateSpace::StateSpace(const ProducerParams& params,
                       const RegulatorPolicy& policy, double r_e,
                       const num::TimeGrid& grid)
    : params_(params), policy_(policy), r_e_(r_e), grid_(grid) {
  params.validate();
  policy.validate();
  if (!(r_e >= params.re_lower && r_e <= params.re_upper)) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "r_e=" + std::to_string(r_e) + " outside re_bounds");
  }
  const double k2re = params.kappa2 * r_e;

  A_.setZero();
  A_(kProduction, kIrradiance) = -k2re;
  A_(kIrradiance, kIrradiance) = -1.0;
  A_(kPollution, kEmission) = 1.0;

  B_ << params.kappa1, 0.0, params.delta, 0.0, 1.0;

  Sigma_.setZero();
  Sigma_(kProduction, 0) = k2re * params.sigma0;
  Sigma_(kIrradiance, 0) = params.sigma0;
  Sigma_(kEmission, 1) = params.sigma1;
  a_ = 0.5 * Sigma_ * Sigma_.transpose();

  F_.setZero();
  F_(kProduction, kProduction) = params.c3 * params.rho1;
  G_.setZero();
  G_(kProduction, kProduction) = policy.c2;
  S_T_.setZero();
  S_T_(kPollution, kPollution) = policy.tau;

  R_ = 2.0 * params.c1;
  BRinvBt_ = B_ * B_.transpose() / R_;
}

Vec5 StateSpace::C(double t) const {
  Vec5 c = Vec5::Zero();
  c(kProduction) = params_.kappa2 * r_e_ *
                   (params_.alpha * std::cos(params_.alpha * t) + params_.theta);
  c(kIrradiance) = params_.theta;
  return c;
}

Vec5 StateSpace::C_integral(double t0, double t1) const {
  Vec5 c = Vec5::Zero();
  c(kProduction) =
      params_.kappa2 * r_e_ *
      (std::sin(params_.alpha * t1) - std::sin(params_.alpha * t0) +
       params_.theta * (t1 - t0));
  c(kIrradiance) = params_.theta * (t1 - t0);
  return c;
}

Vec5 StateSpace::H(double t) const {
  Vec5 h = Vec5::Zero();
  const double d = demand(params_, t);
  h(kProduction) = -(2.0 * policy_.c2 + params_.c3 * params_.rho1) * d -
                   params_.c3 * params_.rho0;
  h(kFuel) = params_.p1;
  return h;
}

double StateSpace::J(double t) const {
  const double d = demand(params_, t);
  return policy_.c2 * d * d;
}

ProductionDecomposition production_decomposition(
    const std::vector<Vec5>& xbar, const ProducerParams& params, double r_e,
    const num::TimeGrid& grid) {
  if (static_cast<int>(xbar.size()) != grid.n_nodes()) {
    throw SolverError(ErrorCode::kInvalidParams,
                      "decomposition: trajectory does not match grid");
  }
  ProductionDecomposition out;
  const auto n = xbar.size();
  out.renewable.resize(n);
  out.nonrenewable.resize(n);
  out.total.resize(n);
  const double k2re = params.kappa2 * r_e;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid.t(static_cast<int>(k));
    // Integrated dynamics: Q_t - Q_0 = kappa1 (Nt_t - Nt_0)
    //                      + kappa2 R_e (sin(alpha t) + S_t - S_0).
    out.nonrenewable[k] =
        params.xbar0(kProduction) +
        params.kappa1 * (xbar[k](kFuel) - params.xbar0(kFuel));
    out.renewable[k] =
        k2re * (std::sin(params.alpha * t) + xbar[k](kIrradiance) -
                params.xbar0(kIrradiance));
    out.total[k] = out.nonrenewable[k] + out.renewable[k];
    const double q = xbar[k](kProduction);
    if (std::abs(out.total[k] - q) > 1e-6 * std::max(1.0, std::abs(q))) {
      throw SolverError(ErrorCode::kDecompositionMismatch,
                        "reconstructed production " +
                            std::to_string(out.total[k]) + " vs Xbar_Q " +
                            std::to_string(q) + " at node " +
                            std::to_string(k));
    }
  }
  return out;
}

}  // namespace carbonmfg
