#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mmrr/numerics/autograd.hpp"

namespace mmrr::num {

// Denominator floor for the relative error, so entries whose analytic and
// numeric gradients are both ~0 do not blow up the ratio.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries_checked = 0;
};

// Compares analytic gradients of `loss_fn` with the five-point central
// difference (f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h over every entry of
// every parameter. Truncation is O(h^4), so h can be large enough that
// cancellation noise (~ulp(f)/h) stays well below the floor.
//
// `loss_fn` must rebuild the graph from the current parameter values on each
// call and be deterministic. Only smooth functions are supported: results for
// functions with kinks or discontinuities (argmax, clamps hit exactly, ...)
// are meaningless.
//
// `stride` > 1 checks every stride-th entry per parameter.
inline GradCheckResult finite_difference_check(const std::function<Var<double>()>& loss_fn,
                                               std::vector<Var<double>> params, double eps = 1e-3,
                                               std::size_t stride = 1) {
  for (auto& p : params) p.zero_grad();
  backward(loss_fn());
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].mutable_value();
    for (std::size_t i = 0; i < value.size(); i += std::max<std::size_t>(stride, 1)) {
      const double orig = value[i];
      auto at = [&](double x) {
        value[i] = x;
        return loss_fn().value().item();
      };
      const double numeric =
          (at(orig - 2 * eps) - 8 * at(orig - eps) + 8 * at(orig + eps) - at(orig + 2 * eps)) / (12.0 * eps);
      value[i] = orig;
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_relative_error = std::max(res.max_relative_error, abs_err / denom);
      ++res.entries_checked;
    }
  }
  return res;
}

}  // namespace mmrr::num
