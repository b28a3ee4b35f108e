#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/data/instances.hpp"
#include "mmrr/model/checkpoint.hpp"
#include "mmrr/numerics/rng.hpp"
#include "mmrr/train/optimizer.hpp"

namespace mmrr::train {

using Json = nlohmann::ordered_json;

inline Json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"warmup", c.warmup},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"preset", std::string(preset_name(c.preset))},
          {"schedule", std::string(schedule_name(c.schedule))},
          {"max_grad_norm", c.max_grad_norm},
          {"window", c.window}};
}

// Called after every epoch with the 1-based epoch number; returning false
// stops training early.
using EpochHook = std::function<bool(std::size_t epoch)>;

struct TrainOptions {
  std::ostream* log = nullptr;  // JSONL, one record per step
  std::string split = "train";
  EpochHook on_epoch;
};

struct FitResult {
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::vector<double> step_losses;  // mean instance loss per step
};

// Minimises the model's loss over `insts` in shuffled fixed-size batches
// (last partial batch kept). Gradients are summed over the batch by running
// backward once per instance and then averaged.
template <class Model, class Inst>
FitResult fit(Model& model, const std::vector<Inst>& insts, const TrainConfig& cfg, const TrainOptions& opt = {}) {
  cfg.validate();
  if (insts.empty()) throw std::invalid_argument("train: no training instances");
  using T = std::remove_cvref_t<decltype(model.parameters().vars().front().value()[0])>;
  NamedParams<T> params(model.parameters().entries().begin(), model.parameters().entries().end());
  OptimizerState<T> state;
  const AdamWHyper hyper{0.9, 0.999, 1e-8, cfg.weight_decay};
  const LabelSet active = cfg.labels();
  const std::size_t per_epoch = (insts.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;

  num::Rng rng(cfg.seed ^ 0x73687566666c6521ULL);
  std::vector<std::size_t> order(insts.size());
  FitResult res;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      model.parameters().zero_grad();
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, order.size());
      double loss_sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        auto loss = model.loss(insts[order[i]], active);
        loss_sum += static_cast<double>(loss.value().item());
        num::backward(loss);
      }
      const double n = static_cast<double>(hi - lo);
      scale_grads(params, 1.0 / n);
      if (cfg.max_grad_norm > 0) {
        const double norm = grad_norm(params);
        if (norm > cfg.max_grad_norm) scale_grads(params, cfg.max_grad_norm / norm);
      }
      const double lr = lr_schedule(state.step + 1, cfg.warmup, cfg.lr, cfg.schedule, total);
      adamw_step(params, state, lr, hyper);
      res.step_losses.push_back(loss_sum / n);
      ++res.steps;
      if (opt.log) {
        Json rec = {{"step", res.steps}, {"split", opt.split}, {"loss", loss_sum / n}, {"lr", lr}, {"seed", cfg.seed}};
        *opt.log << rec.dump() << '\n';
      }
    }
    res.epochs = epoch;
    if (opt.on_epoch && !opt.on_epoch(epoch)) break;
  }
  return res;
}

// Training windows that carry at least one gold relation.
inline std::vector<data::TextInstance> trr_training_instances(const std::vector<data::DialogueDocument>& docs,
                                                              int window, std::size_t max_len) {
  std::vector<data::TextInstance> out;
  for (const auto& d : docs)
    for (auto& inst : data::build_text_instances(d, window, max_len))
      if (!inst.relations.empty()) out.push_back(std::move(inst));
  return out;
}

// (window, frame) pairs with at least one gold visual relation on a mention
// inside the window. Windows end at every utterance (clipped at the
// document start) so frames of the opening utterances are trained too.
inline std::vector<data::MMInstance> mrr_training_instances(const std::vector<data::DialogueDocument>& docs,
                                                            int window, std::size_t max_len) {
  std::vector<data::MMInstance> out;
  for (const auto& d : docs)
    for (auto& inst : data::build_mm_instances(d, window, data::WindowMode::kEval, max_len)) {
      const auto& vrs = inst.frame().visual_relations;
      if (std::any_of(vrs.begin(), vrs.end(), [&](const auto& vr) { return inst.mention_index(vr.src) >= 0; }))
        out.push_back(std::move(inst));
    }
  return out;
}

struct TrainedTrr {
  model::TrrModel<float> model;
  model::Checkpoint checkpoint;
  FitResult fit;
};

struct TrainedMrr {
  model::MrrModel<float> model;
  model::Checkpoint checkpoint;
  FitResult fit;
};

// Text-only pretraining over the preset's relations.
inline TrainedTrr train_trr(const std::vector<data::DialogueDocument>& docs, const TrainConfig& cfg,
                            const model::EncoderConfig& enc, const TrainOptions& opt = {}) {
  cfg.validate();
  const auto insts = trr_training_instances(docs, cfg.window, enc.max_len);
  if (insts.empty()) throw std::invalid_argument("train_trr: corpus yields no text instances with relations");
  model::TrrModel<float> m(model::Vocab::from_corpus(docs), enc);
  auto fit_res = fit(m, insts, cfg, opt);
  auto ck = model::make_checkpoint(m, cfg.labels(), std::string(preset_name(cfg.preset)), cfg.seed, fit_res.steps);
  ck.metadata["train"] = to_json(cfg);
  return {std::move(m), std::move(ck), std::move(fit_res)};
}

// Builds an MRR model whose encoder is either freshly initialised (baseline)
// or copied from a TRR checkpoint (transfer). Fusion and head weights always
// come from the config seeds. The transfer source also fixes the vocabulary.
inline model::MrrModel<float> init_mrr(const std::vector<data::DialogueDocument>& docs, const model::MrrConfig& cfg,
                                       const model::Checkpoint* init_encoder) {
  if (!init_encoder) return model::MrrModel<float>(model::Vocab::from_corpus(docs), cfg);
  const auto src_cfg = model::encoder_config_from(init_encoder->config.at("encoder"));
  auto want = cfg.encoder;
  // The encoder seed only matters for initialisation, which the transfer
  // replaces.
  want.seed = src_cfg.seed;
  if (!(src_cfg == want))
    throw std::invalid_argument("train_mrr: encoder config differs from the transfer checkpoint (" +
                                model::to_json(src_cfg).dump() + " vs " + model::to_json(cfg.encoder).dump() + ")");
  model::MrrModel<float> m(model::Vocab::from_tokens(init_encoder->vocab), cfg);
  const auto src = model::trr_model_from<float>(*init_encoder);
  model::copy_parameters(src.parameters(), m.parameters(), "encoder.");
  return m;
}

inline TrainedMrr train_mrr(const std::vector<data::DialogueDocument>& docs, const TrainConfig& cfg,
                            const model::MrrConfig& mcfg, const model::Checkpoint* init_encoder = nullptr,
                            const TrainOptions& opt = {}) {
  cfg.validate();
  auto m = init_mrr(docs, mcfg, init_encoder);
  const auto insts = mrr_training_instances(docs, cfg.window, m.config().encoder.max_len);
  if (insts.empty()) throw std::invalid_argument("train_mrr: corpus yields no multimodal instances with relations");
  auto fit_res = fit(m, insts, cfg, opt);
  auto ck = model::make_checkpoint(m, cfg.labels(), std::string(preset_name(cfg.preset)), cfg.seed, fit_res.steps);
  ck.metadata["train"] = to_json(cfg);
  if (init_encoder)
    ck.metadata["init_encoder"] = {{"preset", init_encoder->preset},
                                   {"hash", model::content_hash(model::encode_checkpoint(*init_encoder))}};
  return {std::move(m), std::move(ck), std::move(fit_res)};
}

}  // namespace mmrr::train
