#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrr/data/instances.hpp"

namespace mmrr::model {

// Token <-> id map. Ids are dense from 0 and the first five are reserved:
//   0 [PAD]  1 [UNK]  2 [BOS]  3 [SPK_A]  4 [SPK_B]
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kSpeakerA = 3;
  static constexpr int kSpeakerB = 4;
  static constexpr int kNumReserved = 5;

  static const std::vector<std::string>& reserved() {
    static const std::vector<std::string> r = {data::kPadToken, data::kUnkToken, data::kBosToken,
                                               data::kSpeakerAToken, data::kSpeakerBToken};
    return r;
  }

  Vocab() {
    for (const auto& t : reserved()) add(t);
  }

  // Reserved block followed by every corpus token in sorted order.
  static Vocab from_corpus(const std::vector<data::DialogueDocument>& docs) {
    std::set<std::string> tokens;
    for (const auto& d : docs)
      for (const auto& u : d.utterances) tokens.insert(u.tokens.begin(), u.tokens.end());
    Vocab v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    for (int i = 0; i < kNumReserved; ++i) {
      if (static_cast<int>(tokens.size()) <= i || tokens[static_cast<std::size_t>(i)] != reserved()[static_cast<std::size_t>(i)])
        throw std::runtime_error("vocabulary: reserved token " + reserved()[static_cast<std::size_t>(i)] +
                                 " missing at id " + std::to_string(i));
    }
    Vocab v;
    for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
      if (v.ids_.count(tokens[i])) throw std::runtime_error("vocabulary: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  int add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& p) const {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write vocabulary " + p.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open vocabulary " + p.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return from_tokens(tokens);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// Token ids for a window plus its mentions re-indexed into the sequence.
struct Tokenized {
  std::vector<int> ids;
  std::vector<data::WindowMention> mentions;
};

inline Tokenized tokenize(const Vocab& vocab, const data::TokenizedWindow& window) {
  Tokenized t;
  t.ids.reserve(window.tokens.size());
  for (const auto& tok : window.tokens) t.ids.push_back(vocab.id(tok));
  t.mentions = window.mentions;
  return t;
}

// Tokenises consecutive utterances of a document, truncated at `max_len`.
inline Tokenized tokenize(const Vocab& vocab, const data::DialogueDocument& doc, int first_utt,
                          int last_utt, std::size_t max_len) {
  return tokenize(vocab, data::layout_window(doc, first_utt, last_utt, max_len));
}

}  // namespace mmrr::model
