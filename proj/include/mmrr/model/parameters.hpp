#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmrr/numerics/autograd.hpp"
#include "mmrr/numerics/rng.hpp"

namespace mmrr::model {

// Standard deviation of the truncated-normal weight initialisation.
inline constexpr double kInitStddev = 0.02;

// Named trainable tensors in registration order. The order fixes the
// checkpoint layout and the optimizer's iteration order.
template <class T>
class ParameterStore {
 public:
  num::Var<T> add(const std::string& name, num::Tensor<T> init) {
    if (index_.count(name)) throw std::logic_error("parameter registered twice: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, num::parameter(std::move(init)));
    return entries_.back().second;
  }

  num::Var<T> weight(const std::string& name, std::size_t rows, std::size_t cols, num::Rng& rng) {
    num::Tensor<T> t = num::Tensor<T>::matrix(rows, cols);
    for (auto& v : t.storage()) v = static_cast<T>(rng.truncated_normal(kInitStddev));
    return add(name, std::move(t));
  }

  num::Var<T> filled(const std::string& name, std::size_t rows, std::size_t cols, T value) {
    return add(name, num::Tensor<T>::matrix(rows, cols, value));
  }

  const num::Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, num::Var<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.value().size();
    return n;
  }

  std::vector<num::Var<T>> vars() const {
    std::vector<num::Var<T>> out;
    for (const auto& [_, v] : entries_) out.push_back(v);
    return out;
  }

  void zero_grad() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, num::Var<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mmrr::model
