#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mmrr/data/corpus.hpp"
#include "mmrr/numerics/tensor.hpp"

namespace mmrr::data {

// Reserved token strings; the vocabulary pins them to ids 0..4.
inline const std::string kPadToken = "[PAD]";
inline const std::string kUnkToken = "[UNK]";
inline const std::string kBosToken = "[BOS]";
inline const std::string kSpeakerAToken = "[SPK_A]";
inline const std::string kSpeakerBToken = "[SPK_B]";

// A mention located in a window's concatenated token sequence.
struct WindowMention {
  int mention_id = 0;
  int utt = 0;
  std::size_t first = 0;  // first-subword index
  std::size_t end = 0;
  PartOfSpeech pos = PartOfSpeech::kOther;
};

// Token layout of a window: [BOS] then, per utterance, a speaker tag and its
// tokens; everything past `max_len` is cut together with any mention that
// would extend past the cut.
struct TokenizedWindow {
  std::vector<std::string> tokens;
  std::vector<WindowMention> mentions;
  std::vector<int> truncated_mentions;
};

inline TokenizedWindow layout_window(const DialogueDocument& doc, int first_utt, int last_utt,
                                     std::size_t max_len) {
  TokenizedWindow w;
  w.tokens.push_back(kBosToken);
  std::vector<std::size_t> utt_offset(doc.utterances.size(), 0);
  for (int u = first_utt; u <= last_utt; ++u) {
    w.tokens.push_back(speaker_of(u) == 0 ? kSpeakerAToken : kSpeakerBToken);
    utt_offset[static_cast<std::size_t>(u)] = w.tokens.size();
    const auto& toks = doc.utterances[static_cast<std::size_t>(u)].tokens;
    w.tokens.insert(w.tokens.end(), toks.begin(), toks.end());
  }
  if (w.tokens.size() > max_len) w.tokens.resize(max_len);
  for (const auto& m : doc.mentions) {
    if (m.utt < first_utt || m.utt > last_utt) continue;
    const std::size_t off = utt_offset[static_cast<std::size_t>(m.utt)];
    const std::size_t s = off + static_cast<std::size_t>(m.start);
    const std::size_t e = off + static_cast<std::size_t>(m.end);
    if (e > w.tokens.size()) {
      w.truncated_mentions.push_back(m.id);
      continue;
    }
    w.mentions.push_back({m.id, m.utt, s, e, m.pos});
  }
  return w;
}

struct TextInstance {
  const DialogueDocument* doc = nullptr;
  int first_utt = 0;
  int last_utt = 0;
  TokenizedWindow window;
  // Gold relations whose endpoints both survive in the window.
  std::vector<GoldTextRelation> relations;

  std::size_t length() const { return window.tokens.size(); }
  const std::vector<WindowMention>& mentions() const { return window.mentions; }

  // Position of a mention in mentions(), or -1.
  int mention_index(int mention_id) const {
    for (std::size_t i = 0; i < window.mentions.size(); ++i)
      if (window.mentions[i].mention_id == mention_id) return static_cast<int>(i);
    return -1;
  }
};

struct MMInstance : TextInstance {
  std::size_t frame_index = 0;
  const Frame& frame() const { return doc->frames[frame_index]; }
  std::size_t num_candidates() const { return frame().candidates.size(); }
};

// Default maximum sequence length for toy models.
inline constexpr std::size_t kDefaultMaxLen = 64;

namespace detail {

inline TextInstance make_text_instance(const DialogueDocument& doc, int first, int last,
                                       std::size_t max_len) {
  TextInstance inst;
  inst.doc = &doc;
  inst.first_utt = first;
  inst.last_utt = last;
  inst.window = layout_window(doc, first, last, max_len);
  for (const auto& r : doc.text_relations)
    if (inst.mention_index(r.src) >= 0 && inst.mention_index(r.tgt) >= 0) inst.relations.push_back(r);
  return inst;
}

}  // namespace detail

// Windows of `window` consecutive utterances with stride 1. A document
// shorter than the window yields a single truncated window.
inline std::vector<TextInstance> build_text_instances(const DialogueDocument& doc, int window = 3,
                                                      std::size_t max_len = kDefaultMaxLen) {
  std::vector<TextInstance> out;
  const int n = static_cast<int>(doc.utterances.size());
  if (n == 0 || window < 1) return out;
  if (n <= window) {
    out.push_back(detail::make_text_instance(doc, 0, n - 1, max_len));
    return out;
  }
  for (int last = window - 1; last < n; ++last)
    out.push_back(detail::make_text_instance(doc, last - window + 1, last, max_len));
  return out;
}

enum class WindowMode {
  // n - w + 1 sliding windows, as for training.
  kTrain,
  // One window ending at every utterance, clipped at the document start, so
  // the query set is the same for every window length.
  kEval,
};

// Pairs each window with every frame inside the span of the window's last
// utterance.
inline std::vector<MMInstance> build_mm_instances(const DialogueDocument& doc, int window = 3,
                                                  WindowMode mode = WindowMode::kTrain,
                                                  std::size_t max_len = kDefaultMaxLen) {
  std::vector<MMInstance> out;
  const int n = static_cast<int>(doc.utterances.size());
  if (n == 0 || doc.frames.empty() || window < 1) return out;
  std::vector<std::vector<std::size_t>> frames_of(static_cast<std::size_t>(n));
  for (std::size_t f = 0; f < doc.frames.size(); ++f) {
    const int u = doc.utterance_at(doc.frames[f].t_s);
    if (u >= 0) frames_of[static_cast<std::size_t>(u)].push_back(f);
  }
  int first_last = mode == WindowMode::kEval ? 0 : std::min(window, n) - 1;
  for (int last = first_last; last < n; ++last) {
    const auto& fs = frames_of[static_cast<std::size_t>(last)];
    if (fs.empty()) continue;
    const int first = std::max(0, last - window + 1);
    TextInstance base = detail::make_text_instance(doc, first, last, max_len);
    for (std::size_t f : fs) {
      MMInstance inst;
      static_cast<TextInstance&>(inst) = base;
      inst.frame_index = f;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

// Subword-level positive matrices per label plus, per label, which rows
// take part in the loss.
struct GroundTruth {
  PerLabel<num::Tensor<float>> positives;
  PerLabel<std::vector<bool>> row_included;
};

// Text: n x n. Rows of mention first subwords are included for every label
// (a mention without antecedent still trains its null option).
inline GroundTruth ground_truth_matrices(const TextInstance& inst) {
  const std::size_t n = inst.length();
  GroundTruth gt;
  for (auto l : kAllLabels) {
    gt.positives[index_of(l)] = num::Tensor<float>::matrix(n, n);
    gt.row_included[index_of(l)].assign(n, false);
  }
  if (inst.relations.empty()) return gt;
  for (const auto& m : inst.mentions())
    for (auto l : kAllLabels) gt.row_included[index_of(l)][m.first] = true;
  for (const auto& r : inst.relations) {
    const auto& src = inst.mentions()[static_cast<std::size_t>(inst.mention_index(r.src))];
    const auto& tgt = inst.mentions()[static_cast<std::size_t>(inst.mention_index(r.tgt))];
    gt.positives[index_of(r.label)](src.first, tgt.first) = 1.0f;
  }
  return gt;
}

// Candidate j is positive for a gold visual relation iff its box has
// IoU >= threshold with one of the relation's gold boxes. Rows without any
// positive are excluded.
inline GroundTruth ground_truth_matrices(const MMInstance& inst, double threshold = kIouThreshold) {
  const std::size_t n = inst.length();
  const auto& cands = inst.frame().candidates;
  GroundTruth gt;
  for (auto l : kAllLabels) {
    gt.positives[index_of(l)] = num::Tensor<float>::matrix(n, cands.size());
    gt.row_included[index_of(l)].assign(n, false);
  }
  for (const auto& vr : inst.frame().visual_relations) {
    const int mi = inst.mention_index(vr.src);
    if (mi < 0) continue;
    const std::size_t row = inst.mentions()[static_cast<std::size_t>(mi)].first;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const bool hit = std::any_of(vr.boxes.begin(), vr.boxes.end(),
                                   [&](const BoundingBox& g) { return iou(cands[j].box, g) >= threshold; });
      if (hit) {
        gt.positives[index_of(vr.label)](row, j) = 1.0f;
        gt.row_included[index_of(vr.label)][row] = true;
      }
    }
  }
  return gt;
}

}  // namespace mmrr::data
