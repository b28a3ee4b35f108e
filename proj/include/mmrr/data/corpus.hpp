#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/data/geometry.hpp"
#include "mmrr/data/labels.hpp"

namespace mmrr::data {

inline constexpr int kSchemaVersion = 1;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PartOfSpeech : std::uint8_t { kNoun, kPronoun, kPredicate, kOther };

inline std::string_view pos_name(PartOfSpeech p) {
  switch (p) {
    case PartOfSpeech::kNoun: return "noun";
    case PartOfSpeech::kPronoun: return "pronoun";
    case PartOfSpeech::kPredicate: return "predicate";
    case PartOfSpeech::kOther: return "other";
  }
  return "other";
}

inline std::optional<PartOfSpeech> parse_pos(std::string_view s) {
  for (auto p : {PartOfSpeech::kNoun, PartOfSpeech::kPronoun, PartOfSpeech::kPredicate,
                 PartOfSpeech::kOther})
    if (pos_name(p) == s) return p;
  return std::nullopt;
}

struct Utterance {
  int idx = 0;
  std::string text;
  std::vector<std::string> tokens;
  double start_s = 0;
  double end_s = 0;
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// Token span [start, end) inside its utterance's token list.
struct Mention {
  int id = 0;
  int utt = 0;
  int start = 0;
  int end = 0;
  PartOfSpeech pos = PartOfSpeech::kOther;
  std::string surface;  // derived from the tokens on load
  friend bool operator==(const Mention&, const Mention&) = default;
};

struct GoldTextRelation {
  int src = 0;
  int tgt = 0;
  RelationLabel label = RelationLabel::kDirect;
  friend bool operator==(const GoldTextRelation&, const GoldTextRelation&) = default;
};

struct GoldVisualRelation {
  int src = 0;
  RelationLabel label = RelationLabel::kDirect;
  std::vector<BoundingBox> boxes;
  bool zero_reference = false;
  friend bool operator==(const GoldVisualRelation&, const GoldVisualRelation&) = default;
};

struct ObjectCandidate {
  BoundingBox box;
  float confidence = 1.0f;
  std::vector<float> feature;
  friend bool operator==(const ObjectCandidate&, const ObjectCandidate&) = default;
};

struct Frame {
  double t_s = 0;
  std::vector<ObjectCandidate> candidates;
  std::vector<GoldVisualRelation> visual_relations;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct DialogueDocument {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<Mention> mentions;
  std::vector<GoldTextRelation> text_relations;
  std::vector<Frame> frames;

  const Mention* find_mention(int id) const {
    for (const auto& m : mentions)
      if (m.id == id) return &m;
    return nullptr;
  }

  // Index of the utterance whose [start_s, end_s) span holds t; the last
  // utterance also owns its end point. -1 when outside every span.
  int utterance_at(double t) const {
    for (std::size_t i = 0; i < utterances.size(); ++i) {
      const auto& u = utterances[i];
      const bool last = i + 1 == utterances.size();
      if (t >= u.start_s && (t < u.end_s || (last && t == u.end_s))) return static_cast<int>(i);
    }
    return -1;
  }

  friend bool operator==(const DialogueDocument&, const DialogueDocument&) = default;
};

// Speakers alternate by utterance index: even = A, odd = B.
inline int speaker_of(int utterance_idx) { return utterance_idx % 2; }

// ---------------------------------------------------------------------------
// Validation

inline void validate(DialogueDocument& doc) {
  auto fail = [&](const std::string& path, const std::string& msg) {
    throw CorpusError("document '" + doc.id + "' " + path + ": " + msg);
  };
  for (std::size_t i = 0; i < doc.utterances.size(); ++i) {
    const auto& u = doc.utterances[i];
    const std::string path = "utterances[" + std::to_string(i) + "]";
    if (u.idx != static_cast<int>(i)) fail(path + ".idx", "expected " + std::to_string(i));
    if (!(u.start_s <= u.end_s)) fail(path + ".end_s", "ends before it starts");
    if (i > 0 && u.start_s < doc.utterances[i - 1].start_s) fail(path + ".start_s", "out of order");
  }
  std::set<int> ids;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    auto& m = doc.mentions[i];
    const std::string path = "mentions[" + std::to_string(i) + "]";
    if (!ids.insert(m.id).second) fail(path + ".id", "duplicate mention id " + std::to_string(m.id));
    if (m.utt < 0 || m.utt >= static_cast<int>(doc.utterances.size()))
      fail(path + ".utt", "no utterance " + std::to_string(m.utt));
    const auto& toks = doc.utterances[static_cast<std::size_t>(m.utt)].tokens;
    if (m.start < 0 || m.start >= m.end || m.end > static_cast<int>(toks.size()))
      fail(path + ".span", "[" + std::to_string(m.start) + "," + std::to_string(m.end) +
                               ") outside utterance of " + std::to_string(toks.size()) + " tokens");
    m.surface.clear();
    for (int t = m.start; t < m.end; ++t) {
      if (t > m.start) m.surface += ' ';
      m.surface += toks[static_cast<std::size_t>(t)];
    }
  }
  for (std::size_t i = 0; i < doc.text_relations.size(); ++i) {
    const auto& r = doc.text_relations[i];
    const std::string path = "text_relations[" + std::to_string(i) + "]";
    if (!ids.count(r.src)) fail(path + ".src", "unknown mention " + std::to_string(r.src));
    if (!ids.count(r.tgt)) fail(path + ".tgt", "unknown mention " + std::to_string(r.tgt));
  }
  const double t0 = doc.utterances.empty() ? 0.0 : doc.utterances.front().start_s;
  const double t1 = doc.utterances.empty() ? 0.0 : doc.utterances.back().end_s;
  for (std::size_t f = 0; f < doc.frames.size(); ++f) {
    const auto& fr = doc.frames[f];
    const std::string path = "frames[" + std::to_string(f) + "]";
    if (fr.t_s < t0 || fr.t_s > t1) fail(path + ".t_s", "outside the dialogue span");
    std::size_t width = fr.candidates.empty() ? 0 : fr.candidates.front().feature.size();
    for (const auto& c : fr.candidates)
      if (c.feature.size() != width) fail(path + ".candidates", "feature widths differ");
    for (std::size_t v = 0; v < fr.visual_relations.size(); ++v) {
      const auto& vr = fr.visual_relations[v];
      const std::string vpath = path + ".visual_relations[" + std::to_string(v) + "]";
      if (!ids.count(vr.src)) fail(vpath + ".src", "unknown mention " + std::to_string(vr.src));
      if (vr.boxes.empty()) fail(vpath + ".boxes", "needs at least one gold box");
      if (vr.zero_reference && vr.label == RelationLabel::kDirect)
        fail(vpath + ".zero_ref", "zero reference on a direct relation");
    }
  }
}

// ---------------------------------------------------------------------------
// Candidate sidecar: blocks of {magic "RFNF", version u32, q u32, d_O u32}
// followed by q records of (4 x f32 box, f32 confidence, d_O x f32 feature),
// little-endian.

inline constexpr char kSidecarMagic[4] = {'R', 'F', 'N', 'F'};
inline constexpr std::uint32_t kSidecarVersion = 1;

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  v = to_le(v);
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw CorpusError("candidate sidecar truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return to_le(v);
}

inline float get_f32(const std::string& in, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(in, pos));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline std::string encode_candidates(const std::vector<ObjectCandidate>& cands) {
  std::string out(kSidecarMagic, 4);
  const std::uint32_t d = cands.empty() ? 0 : static_cast<std::uint32_t>(cands.front().feature.size());
  detail::put_u32(out, kSidecarVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(cands.size()));
  detail::put_u32(out, d);
  for (const auto& c : cands) {
    for (double v : {c.box.x1(), c.box.y1(), c.box.x2(), c.box.y2()})
      detail::put_f32(out, static_cast<float>(v));
    detail::put_f32(out, c.confidence);
    for (float f : c.feature) detail::put_f32(out, f);
  }
  return out;
}

// Decodes one block starting at `pos`; advances `pos` past it.
inline std::vector<ObjectCandidate> decode_candidates(const std::string& bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size() || std::memcmp(bytes.data() + pos, kSidecarMagic, 4) != 0)
    throw CorpusError("candidate sidecar: bad magic at offset " + std::to_string(pos));
  pos += 4;
  const auto version = detail::get_u32(bytes, pos);
  if (version != kSidecarVersion)
    throw CorpusError("candidate sidecar: unsupported version " + std::to_string(version));
  const auto q = detail::get_u32(bytes, pos);
  const auto d = detail::get_u32(bytes, pos);
  std::vector<ObjectCandidate> out;
  out.reserve(q);
  for (std::uint32_t i = 0; i < q; ++i) {
    float b[4];
    for (float& v : b) v = detail::get_f32(bytes, pos);
    ObjectCandidate c;
    try {
      c.box = BoundingBox(b[0], b[1], b[2], b[3]);
    } catch (const std::invalid_argument& e) {
      throw CorpusError(std::string("candidate sidecar record ") + std::to_string(i) + ": " + e.what());
    }
    c.confidence = detail::get_f32(bytes, pos);
    c.feature.resize(d);
    for (float& f : c.feature) f = detail::get_f32(bytes, pos);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

using Json = nlohmann::ordered_json;

namespace detail {

inline Json box_json(const BoundingBox& b) { return Json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

template <class F>
auto field(const Json& j, const char* key, const std::string& path, F&& convert) {
  if (!j.contains(key)) throw CorpusError(path + "." + key + ": missing");
  try {
    return convert(j.at(key));
  } catch (const std::exception& e) {
    throw CorpusError(path + "." + key + ": " + e.what());
  }
}

inline RelationLabel label_from(const Json& j) {
  auto l = parse_label(j.get<std::string>());
  if (!l) throw CorpusError("unknown relation label '" + j.get<std::string>() + "'");
  return *l;
}

inline BoundingBox box_from(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw CorpusError("box must be [x1,y1,x2,y2]");
  return BoundingBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

}  // namespace detail

// Serialises a document; `candidates_ref` holds the sidecar file (relative to
// the corpus directory) and the byte offset of each frame's block.
inline Json document_to_json(const DialogueDocument& doc,
                             const std::vector<std::pair<std::string, std::uint64_t>>& refs) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["doc_id"] = doc.id;
  j["utterances"] = Json::array();
  for (const auto& u : doc.utterances)
    j["utterances"].push_back(
        {{"idx", u.idx}, {"text", u.text}, {"tokens", u.tokens}, {"start_s", u.start_s}, {"end_s", u.end_s}});
  j["mentions"] = Json::array();
  for (const auto& m : doc.mentions)
    j["mentions"].push_back({{"id", m.id}, {"utt", m.utt}, {"span", {m.start, m.end}}, {"pos", pos_name(m.pos)}});
  j["text_relations"] = Json::array();
  for (const auto& r : doc.text_relations)
    j["text_relations"].push_back({{"src", r.src}, {"tgt", r.tgt}, {"label", label_name(r.label)}});
  j["frames"] = Json::array();
  for (std::size_t f = 0; f < doc.frames.size(); ++f) {
    const auto& fr = doc.frames[f];
    Json jf;
    jf["t_s"] = fr.t_s;
    jf["candidates_ref"] = {{"file", refs.at(f).first}, {"offset", refs.at(f).second}};
    jf["visual_relations"] = Json::array();
    for (const auto& vr : fr.visual_relations) {
      Json boxes = Json::array();
      for (const auto& b : vr.boxes) boxes.push_back(detail::box_json(b));
      jf["visual_relations"].push_back(
          {{"src", vr.src}, {"label", label_name(vr.label)}, {"boxes", boxes}, {"zero_ref", vr.zero_reference}});
    }
    j["frames"].push_back(std::move(jf));
  }
  return j;
}

// Parses one JSONL line. Sidecar references are resolved relative to `root`;
// `sidecars` caches file contents across documents.
inline DialogueDocument document_from_json(const Json& j, const std::filesystem::path& root,
                                           std::map<std::string, std::string>& sidecars) {
  using detail::field;
  std::string id = j.contains("doc_id") && j["doc_id"].is_string() ? j["doc_id"].get<std::string>() : "?";
  const std::string path = "document '" + id + "'";
  const int version = field(j, "schema_version", path, [](const Json& v) { return v.get<int>(); });
  if (version != kSchemaVersion)
    throw CorpusError(path + ".schema_version: unsupported version " + std::to_string(version));
  DialogueDocument doc;
  doc.id = id;
  const auto& utts = field(j, "utterances", path, [](const Json& v) -> const Json& { return v; });
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const std::string p = path + ".utterances[" + std::to_string(i) + "]";
    Utterance u;
    u.idx = field(utts[i], "idx", p, [](const Json& v) { return v.get<int>(); });
    u.text = field(utts[i], "text", p, [](const Json& v) { return v.get<std::string>(); });
    u.tokens = field(utts[i], "tokens", p, [](const Json& v) { return v.get<std::vector<std::string>>(); });
    u.start_s = field(utts[i], "start_s", p, [](const Json& v) { return v.get<double>(); });
    u.end_s = field(utts[i], "end_s", p, [](const Json& v) { return v.get<double>(); });
    doc.utterances.push_back(std::move(u));
  }
  const auto& ments = field(j, "mentions", path, [](const Json& v) -> const Json& { return v; });
  for (std::size_t i = 0; i < ments.size(); ++i) {
    const std::string p = path + ".mentions[" + std::to_string(i) + "]";
    Mention m;
    m.id = field(ments[i], "id", p, [](const Json& v) { return v.get<int>(); });
    m.utt = field(ments[i], "utt", p, [](const Json& v) { return v.get<int>(); });
    auto span = field(ments[i], "span", p, [](const Json& v) { return v.get<std::vector<int>>(); });
    if (span.size() != 2) throw CorpusError(p + ".span: expected [start, end]");
    m.start = span[0];
    m.end = span[1];
    m.pos = field(ments[i], "pos", p, [](const Json& v) {
      auto pos = parse_pos(v.get<std::string>());
      if (!pos) throw CorpusError("unknown part of speech '" + v.get<std::string>() + "'");
      return *pos;
    });
    doc.mentions.push_back(std::move(m));
  }
  const auto& rels = field(j, "text_relations", path, [](const Json& v) -> const Json& { return v; });
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const std::string p = path + ".text_relations[" + std::to_string(i) + "]";
    GoldTextRelation r;
    r.src = field(rels[i], "src", p, [](const Json& v) { return v.get<int>(); });
    r.tgt = field(rels[i], "tgt", p, [](const Json& v) { return v.get<int>(); });
    r.label = field(rels[i], "label", p, detail::label_from);
    doc.text_relations.push_back(r);
  }
  const auto& frames = field(j, "frames", path, [](const Json& v) -> const Json& { return v; });
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::string p = path + ".frames[" + std::to_string(f) + "]";
    Frame fr;
    fr.t_s = field(frames[f], "t_s", p, [](const Json& v) { return v.get<double>(); });
    const auto& ref = field(frames[f], "candidates_ref", p, [](const Json& v) -> const Json& { return v; });
    const auto file = field(ref, "file", p + ".candidates_ref", [](const Json& v) { return v.get<std::string>(); });
    std::size_t offset = field(ref, "offset", p + ".candidates_ref", [](const Json& v) { return v.get<std::size_t>(); });
    auto it = sidecars.find(file);
    if (it == sidecars.end()) it = sidecars.emplace(file, detail::read_file(root / file)).first;
    try {
      fr.candidates = decode_candidates(it->second, offset);
    } catch (const CorpusError& e) {
      throw CorpusError(p + ".candidates_ref: " + e.what());
    }
    const auto& vrs = field(frames[f], "visual_relations", p, [](const Json& v) -> const Json& { return v; });
    for (std::size_t v = 0; v < vrs.size(); ++v) {
      const std::string vp = p + ".visual_relations[" + std::to_string(v) + "]";
      GoldVisualRelation vr;
      vr.src = field(vrs[v], "src", vp, [](const Json& x) { return x.get<int>(); });
      vr.label = field(vrs[v], "label", vp, detail::label_from);
      vr.boxes = field(vrs[v], "boxes", vp, [](const Json& x) {
        std::vector<BoundingBox> out;
        for (const auto& b : x) out.push_back(detail::box_from(b));
        return out;
      });
      vr.zero_reference = field(vrs[v], "zero_ref", vp, [](const Json& x) { return x.get<bool>(); });
      fr.visual_relations.push_back(std::move(vr));
    }
    doc.frames.push_back(std::move(fr));
  }
  validate(doc);
  return doc;
}

// Reads a JSONL corpus; blank lines are skipped.
inline std::vector<DialogueDocument> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  std::vector<DialogueDocument> docs;
  std::map<std::string, std::string> sidecars;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    docs.push_back(document_from_json(j, path.parent_path(), sidecars));
  }
  return docs;
}

// Writes `path` plus one sidecar per document under features/ next to it.
inline void save_corpus(const std::filesystem::path& path, const std::vector<DialogueDocument>& docs) {
  namespace fs = std::filesystem;
  const fs::path root = path.parent_path();
  if (!root.empty()) fs::create_directories(root / "features");
  else fs::create_directories("features");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus " + path.string());
  for (const auto& doc : docs) {
    const std::string rel = "features/" + doc.id + ".rfnf";
    std::string blob;
    std::vector<std::pair<std::string, std::uint64_t>> refs;
    for (const auto& fr : doc.frames) {
      refs.emplace_back(rel, blob.size());
      blob += encode_candidates(fr.candidates);
    }
    std::ofstream side(root / rel, std::ios::binary);
    if (!side) throw CorpusError("cannot write sidecar " + (root / rel).string());
    side.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out << document_to_json(doc, refs).dump() << '\n';
  }
}

}  // namespace mmrr::data
