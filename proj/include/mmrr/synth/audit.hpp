#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmrr/data/corpus.hpp"

namespace mmrr::synth {

struct AuditFailure {
  std::string doc_id;
  int mention_id = 0;
  std::string reason;
};

struct AuditReport {
  std::vector<AuditFailure> failures;
  // (doc id, pronoun mention id) -> number of coreference hops to the noun.
  std::map<std::pair<std::string, int>, int> chain_lengths;
  std::size_t pronouns = 0;
  std::size_t zero_references = 0;

  bool passed() const { return failures.empty(); }

  std::string summary() const {
    std::string s = "audit: " + std::to_string(pronouns) + " pronouns, " + std::to_string(zero_references) +
                    " zero references, " + std::to_string(failures.size()) + " failures";
    for (const auto& f : failures)
      s += "\n  " + f.doc_id + " mention " + std::to_string(f.mention_id) + ": " + f.reason;
    return s;
  }
};

class AuditError : public std::runtime_error {
 public:
  explicit AuditError(const AuditReport& r) : std::runtime_error(r.summary()), report(r) {}
  AuditReport report;
};

// Every pronoun must reach an overt noun through DIRECT links whose
// mentions all lie in the `window` utterances ending at the pronoun, and
// that noun must be grounded in some frame. Every zero-reference relation
// must have a gold box matched by a candidate of its frame.
inline AuditReport resolvability_audit(const std::vector<data::DialogueDocument>& corpus, int window = 3) {
  AuditReport rep;
  for (const auto& doc : corpus) {
    std::map<int, int> antecedent;
    for (const auto& r : doc.text_relations)
      if (r.label == RelationLabel::kDirect && !antecedent.count(r.src)) antecedent[r.src] = r.tgt;
    std::set<int> grounded;
    for (const auto& fr : doc.frames)
      for (const auto& vr : fr.visual_relations)
        if (vr.label == RelationLabel::kDirect) grounded.insert(vr.src);

    for (const auto& m : doc.mentions) {
      if (m.pos != data::PartOfSpeech::kPronoun) continue;
      ++rep.pronouns;
      auto fail = [&](const std::string& why) { rep.failures.push_back({doc.id, m.id, why}); };
      const data::Mention* cur = &m;
      int hops = 0;
      std::set<int> seen{m.id};
      bool ok = true;
      while (cur->pos != data::PartOfSpeech::kNoun) {
        auto it = antecedent.find(cur->id);
        if (it == antecedent.end()) {
          fail("no antecedent link from mention " + std::to_string(cur->id));
          ok = false;
          break;
        }
        const auto* next = doc.find_mention(it->second);
        if (!next || !seen.insert(next->id).second) {
          fail("antecedent chain is cyclic or dangling");
          ok = false;
          break;
        }
        if (next->utt < m.utt - window + 1 || next->utt > m.utt) {
          fail("antecedent " + std::to_string(next->id) + " outside the " + std::to_string(window) +
               "-utterance window");
          ok = false;
          break;
        }
        cur = next;
        ++hops;
      }
      if (!ok) continue;
      if (!grounded.count(cur->id)) {
        fail("antecedent noun " + std::to_string(cur->id) + " is not grounded");
        continue;
      }
      rep.chain_lengths[{doc.id, m.id}] = hops;
    }

    for (const auto& fr : doc.frames)
      for (const auto& vr : fr.visual_relations) {
        if (!vr.zero_reference) continue;
        ++rep.zero_references;
        const bool found = std::any_of(vr.boxes.begin(), vr.boxes.end(), [&](const BoundingBox& g) {
          return std::any_of(fr.candidates.begin(), fr.candidates.end(),
                             [&](const data::ObjectCandidate& c) { return iou(c.box, g) >= kIouThreshold; });
        });
        if (!found) rep.failures.push_back({doc.id, vr.src, "zero reference has no matching candidate"});
      }
  }
  return rep;
}

}  // namespace mmrr::synth
