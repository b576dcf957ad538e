#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "carbonmfg/model.hpp"

namespace carbonmfg::testing {

inline constexpr double kBaselineHorizon = 20.0;
inline constexpr int kBaselineSteps = 730;

inline num::TimeGrid baseline_grid() { return num::TimeGrid(kBaselineHorizon, kBaselineSteps); }

inline ProducerParams baseline_params() {
  return baseline_producer_params(kBaselineHorizon / kBaselineSteps);
}

inline double sup_abs(std::span<const Vec5> x) {
  double out = 0.0;
  for (const auto& v : x) out = std::max(out, v.cwiseAbs().maxCoeff());
  return out;
}

inline double sup_abs_diff(std::span<const Vec5> a, std::span<const Vec5> b) {
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    out = std::max(out, (a[k] - b[k]).cwiseAbs().maxCoeff());
  }
  return out;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace carbonmfg::testing
