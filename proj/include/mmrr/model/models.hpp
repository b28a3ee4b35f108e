#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mmrr/model/encoder.hpp"
#include "mmrr/model/fusion.hpp"
#include "mmrr/model/heads.hpp"

namespace mmrr::model {

// Textual reference resolution: encoder + per-relation mention similarity.
template <class T>
class TrrModel {
 public:
  struct Outputs {
    SimilarityStack<T> pooled;   // M x M per computed label
    LabelStack<T> null_logits;   // M x 1 per computed label
  };

  TrrModel(Vocab vocab, const EncoderConfig& cfg)
      : vocab_(std::move(vocab)), store_(std::make_unique<ParameterStore<T>>()),
        encoder_(*store_, cfg, vocab_.size()) {
    num::Rng rng(cfg.seed ^ 0x7472725f68656164ULL);
    head_ = TrrHeadWeights<T>::make(*store_, cfg.d_model, rng);
  }

  const Vocab& vocab() const { return vocab_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const TrrHeadWeights<T>& head() const { return head_; }
  ParameterStore<T>& parameters() { return *store_; }
  const ParameterStore<T>& parameters() const { return *store_; }
  const EncoderConfig& config() const { return encoder_.config(); }

  Outputs forward(const data::TextInstance& inst, const LabelSet& labels) const {
    const Tokenized tok = tokenize(vocab_, inst.window);
    auto text = encoder_.encode(tok.ids);
    auto expanded = trr_expand(text, head_, labels);
    Outputs out;
    out.pooled = pool_first_subword(trr_similarity(expanded), inst.mentions(), true);
    out.null_logits = trr_null_logits(expanded, inst.mentions(), head_);
    return out;
  }

  num::Var<T> loss(const data::TextInstance& inst, const LabelSet& active) const {
    const auto truth = pool_ground_truth(data::ground_truth_matrices(inst), inst.mentions(), true);
    const auto out = forward(inst, active);
    return loss_trr(out.pooled, out.null_logits, truth, active);
  }

 private:
  Vocab vocab_;
  std::unique_ptr<ParameterStore<T>> store_;
  Encoder<T> encoder_;
  TrrHeadWeights<T> head_;
};

struct MrrConfig {
  EncoderConfig encoder;
  FusionConfig fusion;

  friend bool operator==(const MrrConfig&, const MrrConfig&) = default;
};

template <class T>
num::Tensor<T> candidate_features(const data::Frame& frame, std::size_t width) {
  num::Tensor<T> x = num::Tensor<T>::matrix(frame.candidates.size(), width);
  for (std::size_t i = 0; i < frame.candidates.size(); ++i) {
    const auto& f = frame.candidates[i].feature;
    if (f.size() != width)
      throw num::ShapeError("candidate feature width " + std::to_string(f.size()) + " but model expects " +
                            std::to_string(width));
    for (std::size_t j = 0; j < width; ++j) x(i, j) = static_cast<T>(f[j]);
  }
  return x;
}

// Multimodal reference resolution: encoder + fusion decoder + per-relation
// mention/object similarity.
template <class T>
class MrrModel {
 public:
  MrrModel(Vocab vocab, MrrConfig cfg)
      : cfg_(normalized(std::move(cfg))), vocab_(std::move(vocab)),
        store_(std::make_unique<ParameterStore<T>>()),
        encoder_(*store_, cfg_.encoder, vocab_.size()),
        fusion_(*store_, cfg_.fusion) {
    num::Rng rng(cfg_.fusion.seed ^ 0x6d72725f68656164ULL);
    head_ = MrrHeadWeights<T>::make(*store_, cfg_.fusion.d_shared, rng);
  }

  // The fusion text width always follows the encoder width.
  static MrrConfig normalized(MrrConfig cfg) {
    cfg.fusion.d_text = cfg.encoder.d_model;
    return cfg;
  }

  const Vocab& vocab() const { return vocab_; }
  const MrrConfig& config() const { return cfg_; }
  std::size_t max_len() const { return cfg_.encoder.max_len; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Fusion<T>& fusion() const { return fusion_; }
  const MrrHeadWeights<T>& head() const { return head_; }
  ParameterStore<T>& parameters() { return *store_; }
  const ParameterStore<T>& parameters() const { return *store_; }

  // Pooled U_l (mentions x candidates) for the requested labels.
  SimilarityStack<T> forward(const data::MMInstance& inst, const LabelSet& labels) const {
    const Tokenized tok = tokenize(vocab_, inst.window);
    const std::vector<bool> valid(tok.ids.size(), true);
    auto text = encoder_.encode(tok.ids, valid);
    auto objects = num::constant(candidate_features<T>(inst.frame(), cfg_.fusion.d_object));
    auto [text_proj, obj_proj] = fusion_.project_inputs(text, objects);
    auto fused = fusion_.decode(obj_proj, text_proj, valid);
    auto [t_hat, x_hat] = mrr_expand(text_proj, fused, head_, labels);
    return pool_first_subword(mrr_similarity(t_hat, x_hat), inst.mentions(), false);
  }

  num::Var<T> loss(const data::MMInstance& inst, const LabelSet& active) const {
    const auto truth = pool_ground_truth(data::ground_truth_matrices(inst), inst.mentions(), false);
    return loss_mrr(forward(inst, active), truth, active);
  }

  // Mention x candidate logits for every label, as doubles.
  PerLabel<num::Tensor<double>> score_objects(const data::MMInstance& inst) const {
    const auto stack = forward(inst, LabelSet::all());
    PerLabel<num::Tensor<double>> out;
    for (auto l : kAllLabels) out[index_of(l)] = stack.matrices[index_of(l)].value().template cast<double>();
    return out;
  }

 private:
  MrrConfig cfg_;
  Vocab vocab_;
  std::unique_ptr<ParameterStore<T>> store_;
  Encoder<T> encoder_;
  Fusion<T> fusion_;
  MrrHeadWeights<T> head_;
};

// Copies every parameter whose name starts with `prefix` from `src`;
// shapes must agree. Returns the number of tensors copied.
template <class T, class U>
std::size_t copy_parameters(const ParameterStore<U>& src, ParameterStore<T>& dst, const std::string& prefix) {
  std::size_t copied = 0;
  for (const auto& [name, var] : dst.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!src.contains(name)) throw std::invalid_argument("transfer source lacks parameter " + name);
    const auto& from = src.get(name).value();
    auto to = var;
    if (from.shape() != to.value().shape())
      throw num::ShapeError("parameter " + name + ": " + num::shape_string(from.shape()) + " vs " +
                            num::shape_string(to.value().shape()));
    to.mutable_value() = from.template cast<T>();
    ++copied;
  }
  return copied;
}

}  // namespace mmrr::model
