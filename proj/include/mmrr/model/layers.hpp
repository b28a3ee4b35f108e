#pragma once

#include <string>

#include "mmrr/model/parameters.hpp"
#include "mmrr/numerics/attention.hpp"

namespace mmrr::model {

template <class T>
num::Var<T> linear(const num::Var<T>& x, const num::Var<T>& w, const num::Var<T>& b) {
  return num::add_row(num::matmul(x, w), b);
}

template <class T>
struct LayerNormParams {
  num::Var<T> gain, bias;

  static LayerNormParams make(ParameterStore<T>& store, const std::string& name, std::size_t width) {
    return {store.filled(name + ".gain", 1, width, T(1)), store.filled(name + ".bias", 1, width, T(0))};
  }

  num::Var<T> operator()(const num::Var<T>& x) const { return num::layer_norm(x, gain, bias); }
};

template <class T>
struct AttentionParams {
  num::Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t heads = 1;

  static AttentionParams make(ParameterStore<T>& store, const std::string& name, std::size_t width,
                              std::size_t heads, num::Rng& rng) {
    AttentionParams a;
    a.wq = store.weight(name + ".wq", width, width, rng);
    a.bq = store.filled(name + ".bq", 1, width, T(0));
    a.wk = store.weight(name + ".wk", width, width, rng);
    a.bk = store.filled(name + ".bk", 1, width, T(0));
    a.wv = store.weight(name + ".wv", width, width, rng);
    a.bv = store.filled(name + ".bv", 1, width, T(0));
    a.wo = store.weight(name + ".wo", width, width, rng);
    a.bo = store.filled(name + ".bo", 1, width, T(0));
    a.heads = heads;
    return a;
  }

  // Queries from `x`, keys/values from `ctx`.
  num::Var<T> operator()(const num::Var<T>& x, const num::Var<T>& ctx, const num::Mask* mask) const {
    auto q = linear(x, wq, bq);
    auto k = linear(ctx, wk, bk);
    auto v = linear(ctx, wv, bv);
    return linear(num::attention(q, k, v, mask, heads), wo, bo);
  }
};

template <class T>
struct FeedForwardParams {
  num::Var<T> w1, b1, w2, b2;

  static FeedForwardParams make(ParameterStore<T>& store, const std::string& name, std::size_t width,
                                std::size_t hidden, num::Rng& rng) {
    FeedForwardParams f;
    f.w1 = store.weight(name + ".w1", width, hidden, rng);
    f.b1 = store.filled(name + ".b1", 1, hidden, T(0));
    f.w2 = store.weight(name + ".w2", hidden, width, rng);
    f.b2 = store.filled(name + ".b2", 1, width, T(0));
    return f;
  }

  num::Var<T> operator()(const num::Var<T>& x) const {
    return linear(num::gelu(linear(x, w1, b1)), w2, b2);
  }
};

}  // namespace mmrr::model
