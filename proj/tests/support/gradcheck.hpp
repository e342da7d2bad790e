#pragma once

// Central finite-difference oracle used to check every hand-derived backward
// pass. Runs in double precision with step h; gradients are compared with
// rel_err = |a - n| / max(1, |a| + |n|).

#include <cmath>
#include <functional>

#include "ebtrain/tensor.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-3;
inline constexpr double kTol = 1e-4;

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
}

/// Numeric gradient of `loss()` w.r.t. every element of `param`, compared
/// against `analytic`. Returns the worst relative error.
inline double max_rel_err(ebt::Tensor<double>& param, const ebt::Tensor<double>& analytic,
                          const std::function<double()>& loss, double h = kStep) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double lp = loss();
    param[i] = saved - h;
    const double lm = loss();
    param[i] = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

/// Weighted-sum scalar loss: sum(out * weights); its gradient w.r.t. out is
/// exactly `weights`.
inline double weighted_sum(const ebt::Tensor<double>& out, const ebt::Tensor<double>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

}  // namespace gradcheck
