#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mmrr/model/layers.hpp"

namespace mmrr::model {

struct FusionConfig {
  std::size_t d_text = 64;    // d_T
  std::size_t d_object = 64;  // d_O
  std::size_t d_shared = 64;  // d_S
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ffn_width = 128;
  std::uint64_t seed = 2;

  void validate() const {
    if (heads == 0 || d_shared % heads != 0)
      throw std::invalid_argument("fusion: d_shared " + std::to_string(d_shared) +
                                  " not divisible by heads " + std::to_string(heads));
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Linear projections of both modalities into d_S followed by decoder blocks
// in which object slots attend to each other and then to the text. Object
// slots carry no positional signal, so the decoder is permutation
// equivariant over candidates.
template <class T>
class Fusion {
 public:
  Fusion(ParameterStore<T>& store, const FusionConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    num::Rng rng(cfg.seed);
    text_w_ = store.weight("fusion.text_proj.w", cfg.d_text, cfg.d_shared, rng);
    text_b_ = store.filled("fusion.text_proj.b", 1, cfg.d_shared, T(0));
    obj_w_ = store.weight("fusion.object_proj.w", cfg.d_object, cfg.d_shared, rng);
    obj_b_ = store.filled("fusion.object_proj.b", 1, cfg.d_shared, T(0));
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
      const std::string p = "fusion.block" + std::to_string(i);
      Block b;
      b.ln_self = LayerNormParams<T>::make(store, p + ".ln_self", cfg.d_shared);
      b.self_attn = AttentionParams<T>::make(store, p + ".self_attn", cfg.d_shared, cfg.heads, rng);
      b.ln_cross = LayerNormParams<T>::make(store, p + ".ln_cross", cfg.d_shared);
      b.cross_attn = AttentionParams<T>::make(store, p + ".cross_attn", cfg.d_shared, cfg.heads, rng);
      b.ln_ffn = LayerNormParams<T>::make(store, p + ".ln_ffn", cfg.d_shared);
      b.ffn = FeedForwardParams<T>::make(store, p + ".ffn", cfg.d_shared, cfg.ffn_width, rng);
      blocks_.push_back(std::move(b));
    }
  }

  const FusionConfig& config() const { return cfg_; }

  // (text p x d_T, objects q x d_O) -> (p x d_S, q x d_S)
  std::pair<num::Var<T>, num::Var<T>> project_inputs(const num::Var<T>& text,
                                                     const num::Var<T>& objects) const {
    if (text.cols() != cfg_.d_text)
      throw num::ShapeError("fusion: text width " + num::shape_string(text.shape()) +
                            " does not match d_text " + std::to_string(cfg_.d_text));
    if (objects.cols() != cfg_.d_object)
      throw num::ShapeError("fusion: object width " + num::shape_string(objects.shape()) +
                            " does not match d_object " + std::to_string(cfg_.d_object));
    return {linear(text, text_w_, text_b_), linear(objects, obj_w_, obj_b_)};
  }

  // q x d_S object slots conditioned on the p x d_S text; `text_valid` masks
  // padded text rows out of the cross-attention.
  num::Var<T> decode(const num::Var<T>& objects, const num::Var<T>& text,
                     const std::vector<bool>& text_valid) const {
    if (text_valid.size() != text.rows())
      throw num::ShapeError("fusion: text mask of " + std::to_string(text_valid.size()) +
                            " for text " + num::shape_string(text.shape()));
    const num::Mask cross = num::Mask::from_keys(objects.rows(), text_valid);
    num::Var<T> x = objects;
    for (const auto& b : blocks_) {
      auto h = b.ln_self(x);
      x = num::add(x, b.self_attn(h, h, nullptr));
      x = num::add(x, b.cross_attn(b.ln_cross(x), text, &cross));
      x = num::add(x, b.ffn(b.ln_ffn(x)));
    }
    return x;
  }

  // Exposed for tests that set the projections directly.
  const num::Var<T>& text_weight() const { return text_w_; }
  const num::Var<T>& text_bias() const { return text_b_; }
  const num::Var<T>& object_weight() const { return obj_w_; }
  const num::Var<T>& object_bias() const { return obj_b_; }

 private:
  struct Block {
    LayerNormParams<T> ln_self;
    AttentionParams<T> self_attn;
    LayerNormParams<T> ln_cross;
    AttentionParams<T> cross_attn;
    LayerNormParams<T> ln_ffn;
    FeedForwardParams<T> ffn;
  };

  FusionConfig cfg_;
  num::Var<T> text_w_, text_b_, obj_w_, obj_b_;
  std::vector<Block> blocks_;
};

}  // namespace mmrr::model
