#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "mmrr/data/labels.hpp"
#include "mmrr/model/models.hpp"

namespace mmrr::train {

enum class Schedule { kConstant, kLinearDecay };

inline std::string_view schedule_name(Schedule s) { return s == Schedule::kConstant ? "constant" : "linear-decay"; }

inline Schedule parse_schedule(std::string_view s) {
  if (s == "constant") return Schedule::kConstant;
  if (s == "linear-decay") return Schedule::kLinearDecay;
  throw std::invalid_argument("unknown schedule '" + std::string(s) + "'");
}

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 0.01;
  std::size_t warmup = 1000;
  std::size_t epochs = 16;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  LabelPreset preset = LabelPreset::kFullTrr;
  // After warmup the rate is held at its peak unless linear decay is chosen.
  Schedule schedule = Schedule::kConstant;
  double max_grad_norm = 0.0;  // 0 disables clipping
  int window = 3;              // utterances per training window

  LabelSet labels() const { return preset_labels(preset); }

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive, got " + std::to_string(lr));
    if (!(weight_decay >= 0))
      throw std::invalid_argument("train: weight_decay must be non-negative, got " + std::to_string(weight_decay));
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (window < 1) throw std::invalid_argument("train: window must be at least 1");
    if (max_grad_norm < 0) throw std::invalid_argument("train: max_grad_norm must be non-negative");
    if (labels().empty()) throw std::invalid_argument("train: preset selects no labels");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Full-scale settings. Training at this size is out of reach on a desk
// machine; they are kept as presets so that configs can be checked against
// them.
namespace full_scale {

inline constexpr std::size_t kMaxLen = 256;
inline constexpr std::size_t kWidth = 1024;
inline constexpr std::size_t kCandidatesDialogue = 128;
inline constexpr std::size_t kCandidatesFlickr = 256;

// Text encoder sized like a large DeBERTa-v2 (24 layers, 16 heads).
inline model::EncoderConfig encoder() { return {kWidth, 24, 16, kMaxLen, 4 * kWidth, 1}; }

inline model::MrrConfig mrr() {
  model::MrrConfig c;
  c.encoder = encoder();
  c.fusion = {kWidth, kWidth, kWidth, 2, 16, 4 * kWidth, 2};
  return c;
}

inline TrainConfig trr_training() {
  TrainConfig c;
  c.preset = LabelPreset::kFullTrr;
  c.batch_size = 16;
  return c;
}

inline TrainConfig mrr_training() {
  TrainConfig c;
  c.preset = LabelPreset::kFullMrr;
  c.batch_size = 32;
  return c;
}

}  // namespace full_scale

}  // namespace mmrr::train
