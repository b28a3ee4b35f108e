#pragma once

#include <array>
#include <bitset>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmrr {

// The six reference-relation types. INS and LOC share one label.
enum class RelationLabel : std::uint8_t { kDirect = 0, kNom, kAcc, kDat, kInsLoc, kBridging };

inline constexpr std::size_t kNumLabels = 6;

inline constexpr std::array<RelationLabel, kNumLabels> kAllLabels = {
    RelationLabel::kDirect, RelationLabel::kNom,    RelationLabel::kAcc,
    RelationLabel::kDat,    RelationLabel::kInsLoc, RelationLabel::kBridging};

inline constexpr std::size_t index_of(RelationLabel l) { return static_cast<std::size_t>(l); }

// Names used in corpus files and reports.
inline std::string_view label_name(RelationLabel l) {
  switch (l) {
    case RelationLabel::kDirect: return "=";
    case RelationLabel::kNom: return "NOM";
    case RelationLabel::kAcc: return "ACC";
    case RelationLabel::kDat: return "DAT";
    case RelationLabel::kInsLoc: return "INS_LOC";
    case RelationLabel::kBridging: return "BRIDGING";
  }
  return "?";
}

inline std::optional<RelationLabel> parse_label(std::string_view s) {
  for (auto l : kAllLabels)
    if (label_name(l) == s) return l;
  if (s == "DIRECT") return RelationLabel::kDirect;
  return std::nullopt;
}

// Subset of the six labels.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<RelationLabel> labels) {
    for (auto l : labels) insert(l);
  }

  static LabelSet all() {
    LabelSet s;
    for (auto l : kAllLabels) s.insert(l);
    return s;
  }

  void insert(RelationLabel l) { bits_.set(index_of(l)); }
  bool contains(RelationLabel l) const { return bits_.test(index_of(l)); }
  bool empty() const { return bits_.none(); }
  std::size_t size() const { return bits_.count(); }

  std::vector<RelationLabel> labels() const {
    std::vector<RelationLabel> out;
    for (auto l : kAllLabels)
      if (contains(l)) out.push_back(l);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto l : labels()) out.emplace_back(label_name(l));
    return out;
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::bitset<kNumLabels> bits_;
};

// Ablation presets selecting which relations a model is trained on.
enum class LabelPreset { kCoref, kPasBa, kFullTrr, kDirectOnly, kFullMrr };

inline LabelSet preset_labels(LabelPreset p) {
  using enum RelationLabel;
  switch (p) {
    case LabelPreset::kCoref: return {kDirect};
    case LabelPreset::kPasBa: return {kNom, kAcc, kDat, kInsLoc, kBridging};
    case LabelPreset::kFullTrr: return LabelSet::all();
    case LabelPreset::kDirectOnly: return {kDirect};
    case LabelPreset::kFullMrr: return LabelSet::all();
  }
  return {};
}

inline std::string_view preset_name(LabelPreset p) {
  switch (p) {
    case LabelPreset::kCoref: return "coref";
    case LabelPreset::kPasBa: return "pas-ba";
    case LabelPreset::kFullTrr: return "trr";
    case LabelPreset::kDirectOnly: return "direct-only";
    case LabelPreset::kFullMrr: return "mrr";
  }
  return "?";
}

inline std::optional<LabelPreset> parse_preset(std::string_view s) {
  for (auto p : {LabelPreset::kCoref, LabelPreset::kPasBa, LabelPreset::kFullTrr,
                 LabelPreset::kDirectOnly, LabelPreset::kFullMrr})
    if (preset_name(p) == s) return p;
  if (s == "coref-only") return LabelPreset::kCoref;
  if (s == "pas-ba-only") return LabelPreset::kPasBa;
  if (s == "full-trr") return LabelPreset::kFullTrr;
  return std::nullopt;
}

// Per-label array indexed by RelationLabel.
template <class V>
using PerLabel = std::array<V, kNumLabels>;

}  // namespace mmrr
