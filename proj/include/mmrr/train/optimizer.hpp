#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmrr/numerics/autograd.hpp"
#include "mmrr/train/config.hpp"

namespace mmrr::train {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear ramp 0 -> peak over `warmup` steps, then either constant or a
// linear decay reaching 0 at `total`.
inline double lr_schedule(std::size_t step, std::size_t warmup, double peak, Schedule schedule = Schedule::kConstant,
                          std::size_t total = 0) {
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (schedule == Schedule::kLinearDecay && total > warmup) {
    if (step >= total) return 0.0;
    return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
  }
  return peak;
}

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class T>
struct OptimizerState {
  std::vector<num::Tensor<T>> m;
  std::vector<num::Tensor<T>> v;
  std::size_t step = 0;
};

// Named parameters updated by one optimizer.
template <class T>
using NamedParams = std::vector<std::pair<std::string, num::Var<T>>>;

// One AdamW update with decoupled weight decay (applied to the weights
// before the Adam step). A parameter that never received a gradient is
// treated as having a zero gradient.
template <class T>
void adamw_step(NamedParams<T>& params, OptimizerState<T>& state, double lr, const AdamWHyper& h) {
  if (state.m.empty()) {
    for (const auto& [_, p] : params) {
      state.m.emplace_back(p.value().shape());
      state.v.emplace_back(p.value().shape());
    }
  }
  if (state.m.size() != params.size())
    throw num::ShapeError("adamw: state holds " + std::to_string(state.m.size()) + " tensors for " +
                          std::to_string(params.size()) + " parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, p] = params[k];
    const auto& g = std::as_const(p).grad();
    const bool has_grad = g.shape() == p.value().shape();
    if (has_grad)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(static_cast<double>(g[i])))
          throw NonFiniteGradient("non-finite gradient in " + name + " at entry " + std::to_string(i) +
                                  " on step " + std::to_string(state.step + 1));
    if (state.m[k].shape() != p.value().shape())
      throw num::ShapeError("adamw: moment shape mismatch for " + name);
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const double shrink = 1.0 - lr * h.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].second;
    auto& w = p.mutable_value();
    const auto& g = std::as_const(p).grad();
    const bool has_grad = g.shape() == w.shape();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
      double wi = static_cast<double>(w[i]) * shrink;
      const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      wi -= lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

// Global L2 norm of all gradients.
template <class T>
double grad_norm(const NamedParams<T>& params) {
  double s = 0.0;
  for (const auto& [_, p] : params) {
    const auto& g = p.grad();
    if (g.shape() != p.value().shape()) continue;
    for (std::size_t i = 0; i < g.size(); ++i) s += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  }
  return std::sqrt(s);
}

template <class T>
void scale_grads(NamedParams<T>& params, double factor) {
  for (auto& [_, p] : params) {
    if (std::as_const(p).grad().shape() != p.value().shape()) continue;
    for (auto& x : p.grad().storage()) x = static_cast<T>(static_cast<double>(x) * factor);
  }
}

}  // namespace mmrr::train
