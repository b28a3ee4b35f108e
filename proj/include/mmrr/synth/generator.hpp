#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrr/data/corpus.hpp"
#include "mmrr/numerics/rng.hpp"

// Template-based generator of visually grounded two-party dialogues. A
// dialogue takes place around a static scene of objects; utterances
// reference them overtly ("the red cup"), through the shared pronoun "it",
// or not at all (an omitted argument of a predicate). Gold textual and
// visual relations are emitted for every reference.
namespace mmrr::synth {

struct SynthConfig {
  std::size_t dialogues = 20;
  int min_utterances = 10;
  int max_utterances = 16;
  std::size_t object_vocab = 12;   // object classes available
  std::size_t scene_objects = 4;   // objects present in each dialogue
  std::size_t candidates = 8;      // proposals per frame, incl. the two speaker slots
  int min_frames_per_utterance = 1;
  int max_frames_per_utterance = 2;
  double pronoun_rate = 0.3;
  double zero_rate = 0.2;
  std::size_t feature_dim = 64;
  double feature_noise = 0.1;
  double image_width = 640;
  double image_height = 480;
  std::uint64_t seed = 1;

  void validate() const;
};

class InfeasibleConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lexicon. Nouns may span two tokens; the pronoun is a single shared
// lexeme so its embedding carries no object-class information.
inline const std::vector<std::vector<std::string>>& noun_lexicon() {
  static const std::vector<std::vector<std::string>> nouns = {
      {"cup"},   {"plate"}, {"knife"},  {"bowl"},  {"bottle"}, {"box"},     {"spoon"},
      {"towel"}, {"pan"},   {"kettle"}, {"jar"},   {"tray"},   {"cutting", "board"},
      {"tea", "pot"},       {"sponge"}, {"glass"}};
  return nouns;
}

inline const std::vector<std::string>& attribute_lexicon() {
  static const std::vector<std::string> attrs = {"red", "blue", "green", "small", "big", "white"};
  return attrs;
}

inline const std::vector<std::string>& part_lexicon() {
  static const std::vector<std::string> parts = {"handle", "edge", "bottom", "side"};
  return parts;
}

inline const std::string kPronoun = "it";

inline void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("synth config: " + m); };
  if (pronoun_rate < 0 || pronoun_rate > 1) bad("pronoun_rate outside [0,1]");
  if (zero_rate < 0 || zero_rate > 1) bad("zero_rate outside [0,1]");
  if (min_utterances < 1 || max_utterances < min_utterances) bad("bad utterance range");
  if (min_frames_per_utterance < 1 || max_frames_per_utterance < min_frames_per_utterance) bad("bad frame range");
  if (object_vocab < 2 || object_vocab > noun_lexicon().size())
    bad("object_vocab must be in [2, " + std::to_string(noun_lexicon().size()) + "]");
  if (scene_objects < 2 || scene_objects > object_vocab) bad("scene_objects must be in [2, object_vocab]");
  if (feature_dim == 0) bad("feature_dim must be positive");
  if (scene_objects + 2 > candidates)
    throw InfeasibleConfig("synth config: " + std::to_string(scene_objects) +
                           " scene objects plus 2 speaker slots exceed " + std::to_string(candidates) +
                           " candidates per frame");
}

// Counters kept while generating; used by tests and the CLI manifest.
struct SynthStats {
  std::size_t references = 0;           // object references emitted (overt, pronoun, omitted)
  std::size_t eligible_references = 0;  // those whose object was in focus
  std::size_t pronouns = 0;
  std::size_t zero_references = 0;
};

struct SynthCorpus {
  std::vector<data::DialogueDocument> documents;
  SynthStats stats;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Candidate count reserved for the speaker (A) and listener (B) slots.
inline constexpr std::size_t kExophoricSlots = 2;

namespace detail {

struct Prototypes {
  std::vector<std::vector<double>> classes;   // one per object class
  std::vector<std::vector<double>> speakers;  // A, B
};

inline Prototypes make_prototypes(const SynthConfig& cfg) {
  num::Rng rng(derive_seed(cfg.seed, 0xfeedULL));
  const std::size_t total = cfg.object_vocab + kExophoricSlots;
  // Random Gaussian directions are far apart in expectation; resample any
  // prototype closer than half the expected distance to an earlier one.
  const double min_dist = 0.5 * std::sqrt(2.0 * static_cast<double>(cfg.feature_dim));
  std::vector<std::vector<double>> all;
  while (all.size() < total) {
    std::vector<double> v(cfg.feature_dim);
    for (auto& x : v) x = rng.normal();
    bool ok = true;
    for (const auto& w : all) {
      double d2 = 0;
      for (std::size_t i = 0; i < v.size(); ++i) d2 += (v[i] - w[i]) * (v[i] - w[i]);
      if (std::sqrt(d2) < min_dist) ok = false;
    }
    if (ok) all.push_back(std::move(v));
  }
  Prototypes p;
  p.classes.assign(all.begin(), all.begin() + static_cast<long>(cfg.object_vocab));
  p.speakers.assign(all.begin() + static_cast<long>(cfg.object_vocab), all.end());
  return p;
}

inline BoundingBox speaker_box(int speaker, const SynthConfig& cfg) {
  const double w = cfg.image_width, h = cfg.image_height;
  auto px = [](double v) { return std::round(v); };
  return speaker == 0 ? BoundingBox(px(0.03 * w), px(0.6 * h), px(0.2 * w), px(0.98 * h))
                      : BoundingBox(px(0.8 * w), px(0.6 * h), px(0.97 * w), px(0.98 * h));
}

// Integer-pixel box with IoU < max_iou against every box in `avoid`.
inline BoundingBox sample_box(num::Rng& rng, const SynthConfig& cfg, const std::vector<BoundingBox>& avoid,
                              double max_iou) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double w = std::round(rng.uniform(0.08, 0.25) * cfg.image_width);
    const double h = std::round(rng.uniform(0.08, 0.25) * cfg.image_height);
    const double x = std::round(rng.uniform(0, cfg.image_width - w));
    const double y = std::round(rng.uniform(0, cfg.image_height - h));
    BoundingBox b(x, y, x + w, y + h);
    if (std::all_of(avoid.begin(), avoid.end(), [&](const BoundingBox& a) { return iou(a, b) < max_iou; }))
      return b;
  }
  throw InfeasibleConfig("synth: could not place a box with IoU < " + std::to_string(max_iou));
}

struct SceneObject {
  std::size_t cls = 0;
  std::string attribute;
  BoundingBox box;
  int last_noun_utt = -1000;  // utterance of the latest overt mention
  int last_mention = -1;      // id of the latest mention (overt or pronoun)
};

// Threshold for distractor placement against gold boxes.
inline constexpr double kDistractorMaxIou = 0.3;

class DialogueBuilder {
 public:
  DialogueBuilder(const SynthConfig& cfg, const Prototypes& protos, std::size_t index, SynthStats& stats)
      : cfg_(cfg), protos_(protos), rng_(derive_seed(cfg.seed, index)), stats_(stats) {
    doc_.id = "dlg" + std::to_string(10000 + index).substr(1);
  }

  data::DialogueDocument build() {
    make_scene();
    const int n = rng_.integer(cfg_.min_utterances, cfg_.max_utterances);
    double t = 0.0;
    for (int u = 0; u < n; ++u) {
      const int frames = rng_.integer(cfg_.min_frames_per_utterance, cfg_.max_frames_per_utterance);
      utterance(u, t, t + frames);
      for (int f = 0; f < frames; ++f) frame(t + 0.5 + f);
      t += frames;
    }
    return std::move(doc_);
  }

 private:
  struct Pending {
    int src;
    RelationLabel label;
    BoundingBox box;
    bool zero;
  };

  void make_scene() {
    std::vector<std::size_t> classes(cfg_.object_vocab);
    for (std::size_t i = 0; i < classes.size(); ++i) classes[i] = i;
    rng_.shuffle(classes);
    std::vector<BoundingBox> placed = {speaker_box(0, cfg_), speaker_box(1, cfg_)};
    for (std::size_t i = 0; i < cfg_.scene_objects; ++i) {
      SceneObject o;
      o.cls = classes[i];
      o.attribute = attribute_lexicon()[rng_.index(attribute_lexicon().size())];
      o.box = sample_box(rng_, cfg_, placed, kDistractorMaxIou);
      placed.push_back(o.box);
      scene_.push_back(o);
    }
    absent_classes_.assign(classes.begin() + static_cast<long>(cfg_.scene_objects), classes.end());
  }

  int add_mention(int utt, int start, int end, data::PartOfSpeech pos) {
    const int id = static_cast<int>(doc_.mentions.size());
    doc_.mentions.push_back({id, utt, start, end, pos, {}});
    return id;
  }

  bool in_focus(const SceneObject& o, int u) const { return o.last_noun_utt >= u - 2 && o.last_mention >= 0; }

  // Realises object `oi` as argument `label` of predicate mention `pred`
  // (or as a bare reference when pred < 0). Appends tokens.
  void reference(std::size_t oi, int pred, RelationLabel label, int u) {
    SceneObject& o = scene_[oi];
    ++stats_.references;
    enum class Form { kOvert, kPronoun, kZero } form = Form::kOvert;
    if (in_focus(o, u)) {
      ++stats_.eligible_references;
      const double r = rng_.uniform();
      if (r < cfg_.pronoun_rate)
        form = Form::kPronoun;
      else if (pred >= 0 && r < cfg_.pronoun_rate + (1 - cfg_.pronoun_rate) * cfg_.zero_rate)
        form = Form::kZero;
    }
    if (form == Form::kZero) {
      ++stats_.zero_references;
      doc_.text_relations.push_back({pred, o.last_mention, label});
      pending_.push_back({pred, label, o.box, true});
      return;
    }
    int m;
    if (form == Form::kPronoun) {
      ++stats_.pronouns;
      m = add_mention(u, tok(), tok() + 1, data::PartOfSpeech::kPronoun);
      tokens_.push_back(kPronoun);
      doc_.text_relations.push_back({m, o.last_mention, RelationLabel::kDirect});
    } else {
      tokens_.push_back("the");
      if (rng_.bernoulli(0.5)) tokens_.push_back(o.attribute);
      const auto& noun = noun_lexicon()[o.cls];
      m = add_mention(u, tok(), tok() + static_cast<int>(noun.size()), data::PartOfSpeech::kNoun);
      tokens_.insert(tokens_.end(), noun.begin(), noun.end());
      if (o.last_mention >= 0) doc_.text_relations.push_back({m, o.last_mention, RelationLabel::kDirect});
      o.last_noun_utt = u;
    }
    o.last_mention = m;
    pending_.push_back({m, RelationLabel::kDirect, o.box, false});
    if (pred >= 0) {
      doc_.text_relations.push_back({pred, m, label});
      pending_.push_back({pred, label, o.box, false});
    }
  }

  int tok() const { return static_cast<int>(tokens_.size()); }

  int predicate(const std::string& word, int u) {
    const int m = add_mention(u, tok(), tok() + 1, data::PartOfSpeech::kPredicate);
    tokens_.push_back(word);
    return m;
  }

  void exophoric(int pred, RelationLabel label, int who) {
    pending_.push_back({pred, label, speaker_box(who, cfg_), false});
  }

  std::size_t pick_object(int u, std::optional<std::size_t> exclude = std::nullopt) {
    std::vector<std::size_t> focus, all;
    for (std::size_t i = 0; i < scene_.size(); ++i) {
      if (exclude && *exclude == i) continue;
      all.push_back(i);
      if (in_focus(scene_[i], u)) focus.push_back(i);
    }
    if (!focus.empty() && rng_.bernoulli(0.6)) return focus[rng_.index(focus.size())];
    return all[rng_.index(all.size())];
  }

  void utterance(int u, double start, double end) {
    tokens_.clear();
    pending_.clear();
    const int speaker = data::speaker_of(u), listener = 1 - speaker;
    using enum RelationLabel;
    std::vector<std::size_t> focus;
    for (std::size_t i = 0; i < scene_.size(); ++i)
      if (in_focus(scene_[i], u)) focus.push_back(i);
    const int kind = u == 0 ? 0 : rng_.integer(0, 5);
    switch (kind) {
      case 0: {  // look at X .
        const int p = predicate("look", u);
        tokens_.push_back("at");
        exophoric(p, kNom, listener);
        reference(pick_object(u), p, kAcc, u);
        break;
      }
      case 1: {  // please pass me X .
        tokens_.push_back("please");
        const int p = predicate("pass", u);
        tokens_.push_back("me");
        exophoric(p, kNom, listener);
        exophoric(p, kDat, speaker);
        reference(pick_object(u), p, kAcc, u);
        break;
      }
      case 2: {  // i will put X on Y .
        tokens_.insert(tokens_.end(), {"i", "will"});
        const int p = predicate("put", u);
        exophoric(p, kNom, speaker);
        const auto a = pick_object(u);
        reference(a, p, kAcc, u);
        tokens_.push_back("on");
        reference(pick_object(u, a), p, kDat, u);
        break;
      }
      case 3: {  // wash X with Y .
        const int p = predicate("wash", u);
        exophoric(p, kNom, listener);
        const auto a = pick_object(u);
        reference(a, p, kAcc, u);
        tokens_.push_back("with");
        reference(pick_object(u, a), p, kInsLoc, u);
        break;
      }
      case 4: {  // X is here .   (X is the nominative argument)
        // The argument precedes its predicate, so the predicate mention is
        // created first and its tokens appended after the reference.
        const int p = add_mention(u, 0, 1, data::PartOfSpeech::kPredicate);
        reference(pick_object(u), p, kNom, u);
        doc_.mentions[static_cast<std::size_t>(p)].start = tok();
        doc_.mentions[static_cast<std::size_t>(p)].end = tok() + 1;
        tokens_.insert(tokens_.end(), {"is", "here"});
        break;
      }
      default: {  // the PART is dirty .   (bridging to an object in focus)
        if (focus.empty()) {
          const int p = predicate("look", u);
          tokens_.push_back("at");
          exophoric(p, kNom, listener);
          reference(pick_object(u), p, kAcc, u);
          break;
        }
        const auto& o = scene_[focus[rng_.index(focus.size())]];
        tokens_.push_back("the");
        const int m = add_mention(u, tok(), tok() + 1, data::PartOfSpeech::kNoun);
        tokens_.push_back(part_lexicon()[rng_.index(part_lexicon().size())]);
        tokens_.insert(tokens_.end(), {"is", "dirty"});
        doc_.text_relations.push_back({m, o.last_mention, kBridging});
        pending_.push_back({m, kBridging, o.box, false});
        break;
      }
    }
    tokens_.push_back(".");
    data::Utterance utt;
    utt.idx = u;
    utt.tokens = tokens_;
    for (std::size_t i = 0; i < tokens_.size(); ++i) utt.text += (i ? " " : "") + tokens_[i];
    utt.start_s = start;
    utt.end_s = end;
    doc_.utterances.push_back(std::move(utt));
    current_ = pending_;
  }

  std::vector<float> feature(const std::vector<double>& proto) {
    std::vector<float> f(proto.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(proto[i] + cfg_.feature_noise * rng_.normal());
    return f;
  }

  void frame(double t) {
    data::Frame fr;
    fr.t_s = t;
    std::vector<BoundingBox> gold = {speaker_box(0, cfg_), speaker_box(1, cfg_)};
    for (int s = 0; s < 2; ++s) fr.candidates.push_back({speaker_box(s, cfg_), 1.0f, feature(protos_.speakers[static_cast<std::size_t>(s)])});
    for (const auto& o : scene_) {
      fr.candidates.push_back({o.box, static_cast<float>(rng_.uniform(0.7, 1.0)), feature(protos_.classes[o.cls])});
      gold.push_back(o.box);
    }
    while (fr.candidates.size() < cfg_.candidates) {
      const std::size_t cls = absent_classes_.empty() ? rng_.index(cfg_.object_vocab)
                                                      : absent_classes_[rng_.index(absent_classes_.size())];
      const BoundingBox b = sample_box(rng_, cfg_, gold, kDistractorMaxIou);
      fr.candidates.push_back({b, static_cast<float>(rng_.uniform(0.3, 0.9)), feature(protos_.classes[cls])});
    }
    rng_.shuffle(fr.candidates);
    for (const auto& p : current_) fr.visual_relations.push_back({p.src, p.label, {p.box}, p.zero});
    doc_.frames.push_back(std::move(fr));
  }

  const SynthConfig& cfg_;
  const Prototypes& protos_;
  num::Rng rng_;
  SynthStats& stats_;
  data::DialogueDocument doc_;
  std::vector<SceneObject> scene_;
  std::vector<std::size_t> absent_classes_;
  std::vector<std::string> tokens_;
  std::vector<Pending> pending_, current_;
};

}  // namespace detail

inline SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto protos = detail::make_prototypes(cfg);
  SynthCorpus out;
  for (std::size_t i = 0; i < cfg.dialogues; ++i) {
    auto doc = detail::DialogueBuilder(cfg, protos, i, out.stats).build();
    data::validate(doc);
    out.documents.push_back(std::move(doc));
  }
  return out;
}

}  // namespace mmrr::synth
