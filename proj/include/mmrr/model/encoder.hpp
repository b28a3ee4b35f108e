#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mmrr/model/layers.hpp"
#include "mmrr/model/vocab.hpp"

namespace mmrr::model {

struct EncoderConfig {
  std::size_t d_model = 64;  // d_T
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 64;  // p
  std::size_t ffn_width = 128;
  std::uint64_t seed = 1;

  void validate() const {
    if (heads == 0 || d_model % heads != 0)
      throw std::invalid_argument("encoder: d_model " + std::to_string(d_model) +
                                  " not divisible by heads " + std::to_string(heads));
    if (max_len < 2) throw std::invalid_argument("encoder: max_len must be at least 2");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class T>
num::Tensor<T> sinusoidal_positions(std::size_t len, std::size_t width) {
  num::Tensor<T> pe = num::Tensor<T>::matrix(len, width);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) / rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// Token embedding + sinusoidal positions + pre-norm self-attention blocks.
// Produces one row per input position; padded rows are zero.
template <class T>
class Encoder {
 public:
  Encoder(ParameterStore<T>& store, const EncoderConfig& cfg, std::size_t vocab_size)
      : cfg_(cfg), positions_(sinusoidal_positions<T>(cfg.max_len, cfg.d_model)) {
    cfg_.validate();
    num::Rng rng(cfg.seed);
    embedding_ = store.weight("encoder.embedding", vocab_size, cfg.d_model, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l);
      Block b;
      b.ln_attn = LayerNormParams<T>::make(store, p + ".ln_attn", cfg.d_model);
      b.attn = AttentionParams<T>::make(store, p + ".attn", cfg.d_model, cfg.heads, rng);
      b.ln_ffn = LayerNormParams<T>::make(store, p + ".ln_ffn", cfg.d_model);
      b.ffn = FeedForwardParams<T>::make(store, p + ".ffn", cfg.d_model, cfg.ffn_width, rng);
      blocks_.push_back(std::move(b));
    }
    if (cfg.layers > 0) final_ln_ = LayerNormParams<T>::make(store, "encoder.ln_final", cfg.d_model);
  }

  const EncoderConfig& config() const { return cfg_; }

  // `valid[i]` is false for padding positions.
  num::Var<T> encode(const std::vector<int>& ids, const std::vector<bool>& valid) const {
    if (ids.size() > cfg_.max_len)
      throw std::invalid_argument("encoder: sequence of " + std::to_string(ids.size()) +
                                  " exceeds max_len " + std::to_string(cfg_.max_len));
    if (valid.size() != ids.size()) throw std::invalid_argument("encoder: mask length differs from ids");
    const std::size_t n = ids.size();
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    num::Tensor<T> pos = num::Tensor<T>::matrix(n, cfg_.d_model);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(positions_.row(i).begin(), cfg_.d_model, pos.row(i).begin());
    num::Var<T> x = num::add(num::gather_rows(embedding_, rows), num::constant(std::move(pos)));
    if (!blocks_.empty()) {
      const num::Mask keys = num::Mask::from_keys(n, valid);
      for (const auto& b : blocks_) {
        auto h = b.ln_attn(x);
        x = num::add(x, b.attn(h, h, &keys));
        x = num::add(x, b.ffn(b.ln_ffn(x)));
      }
      x = final_ln_(x);
    }
    return num::mask_rows(x, valid);
  }

  num::Var<T> encode(const std::vector<int>& ids) const {
    return encode(ids, std::vector<bool>(ids.size(), true));
  }

 private:
  struct Block {
    LayerNormParams<T> ln_attn;
    AttentionParams<T> attn;
    LayerNormParams<T> ln_ffn;
    FeedForwardParams<T> ffn;
  };

  EncoderConfig cfg_;
  num::Tensor<T> positions_;
  num::Var<T> embedding_;
  std::vector<Block> blocks_;
  LayerNormParams<T> final_ln_;
};

}  // namespace mmrr::model
