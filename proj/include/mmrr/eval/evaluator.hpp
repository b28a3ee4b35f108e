#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/data/instances.hpp"
#include "mmrr/eval/metrics.hpp"

namespace mmrr::eval {

using Json = nlohmann::ordered_json;

// Anything that returns mention x candidate logits per label for an
// instance, rows in instance mention order.
template <class S>
concept ObjectScorer = requires(const S& s, const data::MMInstance& inst) {
  { s.score_objects(inst) } -> std::convertible_to<PerLabel<num::Tensor<double>>>;
  { s.max_len() } -> std::convertible_to<std::size_t>;
};

enum class Category { kNoun, kPronoun, kOther };

inline Category category_of(data::PartOfSpeech p) {
  if (p == data::PartOfSpeech::kNoun) return Category::kNoun;
  if (p == data::PartOfSpeech::kPronoun) return Category::kPronoun;
  return Category::kOther;
}

// Report groupings. "zero_refs" overlays the partition: its queries are
// also counted under their mention's category.
inline const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {"overall", "nouns", "pronouns", "others", "zero_refs"};
  return names;
}

struct EvalConfig {
  std::vector<std::size_t> ks = {1, 5, 10};
  double iou_threshold = kIouThreshold;
  int window = 1;  // utterances per evaluation window
  LabelSet relations = LabelSet::all();
  bool confidence = false;
  std::vector<int> lengths;  // utterance-length sweep, empty = off

  void validate() const {
    if (ks.empty()) throw std::invalid_argument("eval: no k values");
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i] == 0 || (i > 0 && ks[i] <= ks[i - 1]))
        throw std::invalid_argument("eval: k values must be positive and ascending");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
      throw std::invalid_argument("eval: IoU threshold must lie in (0, 1]");
    if (window < 1) throw std::invalid_argument("eval: window must be at least 1");
    for (int l : lengths)
      if (l < 1) throw std::invalid_argument("eval: sweep lengths must be at least 1");
    if (relations.empty()) throw std::invalid_argument("eval: no relations selected");
  }
};

inline Json to_json(const EvalConfig& c) {
  return {{"ks", c.ks},
          {"iou_threshold", c.iou_threshold},
          {"window", c.window},
          {"relations", c.relations.names()},
          {"confidence", c.confidence},
          {"lengths", c.lengths}};
}

// One (mention, relation, frame) query.
struct QueryResult {
  std::string doc_id;
  int mention_id = 0;
  RelationLabel label = RelationLabel::kDirect;
  std::size_t frame = 0;
  Category category = Category::kOther;
  bool zero_reference = false;
  bool in_window = true;  // false: mention truncated away, always a miss
  std::vector<ScoredBox> predictions;
  std::vector<BoundingBox> gold;

  bool hit(std::size_t k, double threshold) const { return in_window && hit_at_k(predictions, gold, k, threshold); }

  bool in_category(const std::string& name) const {
    if (name == "overall") return true;
    if (name == "nouns") return category == Category::kNoun;
    if (name == "pronouns") return category == Category::kPronoun;
    if (name == "others") return category == Category::kOther;
    if (name == "zero_refs") return zero_reference;
    throw std::invalid_argument("unknown category '" + name + "'");
  }
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) z += p[j] = std::exp(logits[j] - mx);
  for (auto& x : p) x /= z;
  return p;
}

// Scores every gold visual relation of every frame, with windows of
// `window` utterances ending at the frame's utterance.
template <ObjectScorer S>
std::vector<QueryResult> collect_queries(const S& scorer, const std::vector<data::DialogueDocument>& docs,
                                         int window, const LabelSet& relations) {
  std::vector<QueryResult> out;
  for (const auto& doc : docs) {
    for (const auto& inst : data::build_mm_instances(doc, window, data::WindowMode::kEval, scorer.max_len())) {
      const auto& fr = inst.frame();
      bool any = false;
      for (const auto& vr : fr.visual_relations) any = any || relations.contains(vr.label);
      if (!any) continue;
      const bool has_rows = !inst.mentions().empty();
      PerLabel<num::Tensor<double>> logits;
      if (has_rows) logits = scorer.score_objects(inst);
      for (const auto& vr : fr.visual_relations) {
        if (!relations.contains(vr.label)) continue;
        QueryResult q;
        q.doc_id = doc.id;
        q.mention_id = vr.src;
        q.label = vr.label;
        q.frame = inst.frame_index;
        q.zero_reference = vr.zero_reference;
        q.gold = vr.boxes;
        if (const auto* m = doc.find_mention(vr.src)) q.category = category_of(m->pos);
        const int row = inst.mention_index(vr.src);
        q.in_window = row >= 0;
        if (q.in_window) {
          const auto& u = logits[index_of(vr.label)];
          std::vector<double> r(u.row(static_cast<std::size_t>(row)).begin(), u.row(static_cast<std::size_t>(row)).end());
          const auto p = softmax(r);
          for (std::size_t j = 0; j < p.size(); ++j) q.predictions.push_back({fr.candidates[j].box, p[j]});
        }
        out.push_back(std::move(q));
      }
    }
  }
  return out;
}

// Recall over the queries selected by `keep`; nullopt when none are.
inline std::optional<double> recall_where(const std::vector<QueryResult>& qs, std::size_t k, double threshold,
                                          const std::function<bool(const QueryResult&)>& keep,
                                          std::size_t* count = nullptr) {
  std::size_t n = 0, hits = 0;
  for (const auto& q : qs) {
    if (!keep(q)) continue;
    ++n;
    hits += q.hit(k, threshold);
  }
  if (count) *count = n;
  if (n == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(n);
}

struct ReportRow {
  std::string relation;
  std::string category;
  std::size_t k = 1;
  std::optional<double> recall;
  std::size_t n = 0;
};

struct LengthRow {
  int length = 1;
  std::string relation;
  std::string category;
  std::vector<std::optional<double>> recall;  // one per k
  std::size_t n = 0;
};

struct EvalReport {
  Json config;
  std::vector<ReportRow> rows;
  std::optional<ConfidenceStats> confidence;
  std::vector<LengthRow> length_sweep;
  std::vector<QueryResult> queries;  // not serialised

  const ReportRow* find(const std::string& relation, const std::string& category, std::size_t k) const {
    for (const auto& r : rows)
      if (r.relation == relation && r.category == category && r.k == k) return &r;
    return nullptr;
  }
};

inline std::vector<ReportRow> tabulate(const std::vector<QueryResult>& qs, const EvalConfig& cfg) {
  std::vector<ReportRow> rows;
  for (auto l : cfg.relations.labels())
    for (const auto& cat : category_names())
      for (std::size_t k : cfg.ks) {
        ReportRow r{std::string(label_name(l)), cat, k, std::nullopt, 0};
        r.recall = recall_where(
            qs, k, cfg.iou_threshold, [&](const QueryResult& q) { return q.label == l && q.in_category(cat); }, &r.n);
        rows.push_back(std::move(r));
      }
  return rows;
}

inline ConfidenceStats query_confidence(const std::vector<QueryResult>& qs, const std::vector<std::size_t>& ks) {
  std::vector<std::vector<double>> lists;
  for (const auto& q : qs) {
    if (!q.in_window) continue;
    std::vector<double> c;
    for (const auto& p : q.predictions) c.push_back(p.confidence);
    lists.push_back(std::move(c));
  }
  return confidence_stats(lists, ks);
}

// Re-windows evaluation at each length; one row per (length, category) for
// `relation`.
template <ObjectScorer S>
std::vector<LengthRow> utterance_length_ablation(const S& scorer, const std::vector<data::DialogueDocument>& docs,
                                                 const std::vector<int>& lengths, const EvalConfig& cfg,
                                                 RelationLabel relation = RelationLabel::kDirect) {
  std::vector<LengthRow> out;
  for (int len : lengths) {
    if (len < 1) throw std::invalid_argument("utterance_length_ablation: length must be at least 1");
    const auto qs = collect_queries(scorer, docs, len, LabelSet{relation});
    for (const auto& cat : category_names()) {
      LengthRow row{len, std::string(label_name(relation)), cat, {}, 0};
      for (std::size_t k : cfg.ks)
        row.recall.push_back(recall_where(
            qs, k, cfg.iou_threshold, [&](const QueryResult& q) { return q.in_category(cat); }, &row.n));
      out.push_back(std::move(row));
    }
  }
  return out;
}

// Per-relation recall tables over the configured relations (all six by
// default).
template <ObjectScorer S>
EvalReport evaluate_mrr(const S& scorer, const std::vector<data::DialogueDocument>& docs, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport rep;
  rep.config = to_json(cfg);
  rep.queries = collect_queries(scorer, docs, cfg.window, cfg.relations);
  rep.rows = tabulate(rep.queries, cfg);
  if (cfg.confidence) rep.confidence = query_confidence(rep.queries, cfg.ks);
  if (!cfg.lengths.empty())
    for (auto l : cfg.relations.labels()) {
      auto rows = utterance_length_ablation(scorer, docs, cfg.lengths, cfg, l);
      rep.length_sweep.insert(rep.length_sweep.end(), rows.begin(), rows.end());
    }
  return rep;
}

// Phrase grounding: the direct relation only.
template <ObjectScorer S>
EvalReport evaluate_grounding(const S& scorer, const std::vector<data::DialogueDocument>& docs, EvalConfig cfg) {
  cfg.relations = LabelSet{RelationLabel::kDirect};
  return evaluate_mrr(scorer, docs, cfg);
}

// ---------------------------------------------------------------------------
// Serialisation

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json report_to_json(const EvalReport& rep) {
  Json j;
  j["config"] = rep.config;
  j["rows"] = Json::array();
  for (const auto& r : rep.rows)
    j["rows"].push_back(
        {{"relation", r.relation}, {"category", r.category}, {"k", r.k}, {"recall", optional_json(r.recall)}, {"n", r.n}});
  if (rep.confidence) {
    Json c;
    for (const auto& [k, v] : rep.confidence->top) c["top"][std::to_string(k)] = v;
    for (const auto& [k, v] : rep.confidence->bottom) c["bottom"][std::to_string(k)] = v;
    c["all"] = rep.confidence->all;
    c["quantiles"] = rep.confidence->quantiles;
    c["count"] = rep.confidence->count;
    j["confidence"] = c;
  }
  if (!rep.length_sweep.empty()) {
    j["length_sweep"] = Json::array();
    for (const auto& r : rep.length_sweep) {
      Json rec = {{"length", r.length}, {"relation", r.relation}, {"category", r.category}, {"n", r.n}};
      rec["recall"] = Json::array();
      for (const auto& v : r.recall) rec["recall"].push_back(optional_json(v));
      j["length_sweep"].push_back(rec);
    }
  }
  return j;
}

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline EvalReport report_from_json(const Json& j) {
  EvalReport rep;
  try {
    rep.config = j.at("config");
    for (const auto& r : j.at("rows")) {
      ReportRow row{r.at("relation").get<std::string>(), r.at("category").get<std::string>(),
                    r.at("k").get<std::size_t>(), std::nullopt, r.at("n").get<std::size_t>()};
      if (!r.at("recall").is_null()) row.recall = r.at("recall").get<double>();
      rep.rows.push_back(std::move(row));
    }
    if (j.contains("confidence")) {
      const auto& c = j.at("confidence");
      ConfidenceStats s;
      for (const auto& [k, v] : c.at("top").items()) s.top[std::stoul(k)] = v.get<double>();
      for (const auto& [k, v] : c.at("bottom").items()) s.bottom[std::stoul(k)] = v.get<double>();
      s.all = c.at("all").get<double>();
      s.quantiles = c.at("quantiles").get<std::vector<double>>();
      s.count = c.at("count").get<std::size_t>();
      rep.confidence = s;
    }
    if (j.contains("length_sweep"))
      for (const auto& r : j.at("length_sweep")) {
        LengthRow row{r.at("length").get<int>(), r.at("relation").get<std::string>(),
                      r.at("category").get<std::string>(), {}, r.at("n").get<std::size_t>()};
        for (const auto& v : r.at("recall"))
          row.recall.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        rep.length_sweep.push_back(std::move(row));
      }
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  return rep;
}

inline std::string format_recall(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *v;
  return os.str();
}

// Aligned text tables, one block per relation: categories down, R@k across,
// query counts in parentheses.
inline std::string report_to_text(const EvalReport& rep) {
  std::ostringstream os;
  std::vector<std::string> relations;
  std::vector<std::size_t> ks;
  for (const auto& r : rep.rows) {
    if (std::find(relations.begin(), relations.end(), r.relation) == relations.end()) relations.push_back(r.relation);
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
  }
  for (const auto& rel : relations) {
    os << "relation " << rel << '\n';
    os << std::left << std::setw(18) << "category";
    for (std::size_t k : ks) os << std::right << std::setw(8) << ("R@" + std::to_string(k));
    os << '\n';
    for (const auto& cat : category_names()) {
      const ReportRow* first = rep.find(rel, cat, ks.front());
      if (!first) continue;
      os << std::left << std::setw(18) << (cat + " (" + std::to_string(first->n) + ")");
      for (std::size_t k : ks) os << std::right << std::setw(8) << format_recall(rep.find(rel, cat, k)->recall);
      os << '\n';
    }
    os << '\n';
  }
  if (rep.confidence) {
    const auto& c = *rep.confidence;
    os << "confidence (" << c.count << " predictions)\n";
    for (const auto& [k, v] : c.top)
      os << "  " << std::left << std::setw(11) << ("top-" + std::to_string(k)) << std::fixed << std::setprecision(4)
         << v << '\n';
    for (const auto& [k, v] : c.bottom)
      os << "  " << std::left << std::setw(11) << ("bottom-" + std::to_string(k)) << std::fixed
         << std::setprecision(4) << v << '\n';
    os << "  " << std::left << std::setw(11) << "all" << std::fixed << std::setprecision(4) << c.all << '\n';
  }
  std::vector<int> lengths;
  for (const auto& r : rep.length_sweep)
    if (std::find(lengths.begin(), lengths.end(), r.length) == lengths.end()) lengths.push_back(r.length);
  for (int len : lengths) {
    os << "\nutterance length " << len << '\n';
    for (const auto& r : rep.length_sweep) {
      if (r.length != len) continue;
      os << "  " << std::left << std::setw(10) << r.relation << std::setw(18)
         << (r.category + " (" + std::to_string(r.n) + ")");
      for (const auto& v : r.recall) os << std::right << std::setw(8) << format_recall(v);
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace mmrr::eval
