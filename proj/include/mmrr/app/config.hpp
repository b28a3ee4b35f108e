#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/eval/evaluator.hpp"
#include "mmrr/model/checkpoint.hpp"
#include "mmrr/synth/generator.hpp"
#include "mmrr/train/trainer.hpp"

namespace mmrr::app {

using Json = nlohmann::ordered_json;

// Bad flags, files or values supplied by the user (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key = value settings; later assignments win.
using Settings = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// One `key = value` per line; '#' starts a comment.
inline Settings parse_settings(const std::string& text, const std::string& source) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(source + ":" + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(lineno) + ": empty key");
    s[key] = detail::trim(line.substr(eq + 1));
  }
  return s;
}

inline Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_settings(os.str(), path.string());
}

// `key=value` from the command line.
inline void apply_override(Settings& s, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  s[detail::trim(assignment.substr(0, eq))] = detail::trim(assignment.substr(eq + 1));
}

// Every setting a command may read. Training defaults are the full-scale
// values; model widths default to the toy sizes.
struct RunConfig {
  synth::SynthConfig synth;
  train::TrainConfig train;
  model::EncoderConfig encoder;
  model::FusionConfig fusion;
  bool d_object_set = false;  // otherwise taken from the corpus features
  eval::EvalConfig eval;
};

namespace detail {

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw UsageError("setting " + key + ": cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("setting " + key + ": expected true or false, got '" + v + "'");
}

template <class N>
std::vector<N> parse_list(const std::string& key, const std::string& v) {
  std::vector<N> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<N>(key, trim(item)));
  if (out.empty()) throw UsageError("setting " + key + ": empty list");
  return out;
}

using Binder = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <class N, class F>
Binder num(F field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_number<N>(k, v); };
}

inline const std::map<std::string, Binder>& binders() {
  static const std::map<std::string, Binder> b = {
      {"synth.dialogues", num<std::size_t>([](RunConfig& c) -> auto& { return c.synth.dialogues; })},
      {"synth.min_utterances", num<int>([](RunConfig& c) -> auto& { return c.synth.min_utterances; })},
      {"synth.max_utterances", num<int>([](RunConfig& c) -> auto& { return c.synth.max_utterances; })},
      {"synth.object_vocab", num<std::size_t>([](RunConfig& c) -> auto& { return c.synth.object_vocab; })},
      {"synth.scene_objects", num<std::size_t>([](RunConfig& c) -> auto& { return c.synth.scene_objects; })},
      {"synth.candidates", num<std::size_t>([](RunConfig& c) -> auto& { return c.synth.candidates; })},
      {"synth.min_frames_per_utterance",
       num<int>([](RunConfig& c) -> auto& { return c.synth.min_frames_per_utterance; })},
      {"synth.max_frames_per_utterance",
       num<int>([](RunConfig& c) -> auto& { return c.synth.max_frames_per_utterance; })},
      {"synth.pronoun_rate", num<double>([](RunConfig& c) -> auto& { return c.synth.pronoun_rate; })},
      {"synth.zero_rate", num<double>([](RunConfig& c) -> auto& { return c.synth.zero_rate; })},
      {"synth.feature_dim", num<std::size_t>([](RunConfig& c) -> auto& { return c.synth.feature_dim; })},
      {"synth.feature_noise", num<double>([](RunConfig& c) -> auto& { return c.synth.feature_noise; })},
      {"synth.seed", num<std::uint64_t>([](RunConfig& c) -> auto& { return c.synth.seed; })},
      {"train.lr", num<double>([](RunConfig& c) -> auto& { return c.train.lr; })},
      {"train.weight_decay", num<double>([](RunConfig& c) -> auto& { return c.train.weight_decay; })},
      {"train.warmup", num<std::size_t>([](RunConfig& c) -> auto& { return c.train.warmup; })},
      {"train.epochs", num<std::size_t>([](RunConfig& c) -> auto& { return c.train.epochs; })},
      {"train.batch_size", num<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.seed", num<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.seed; })},
      {"train.max_grad_norm", num<double>([](RunConfig& c) -> auto& { return c.train.max_grad_norm; })},
      {"train.window", num<int>([](RunConfig& c) -> auto& { return c.train.window; })},
      {"train.preset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto p = parse_preset(v);
         if (!p) throw UsageError("setting " + k + ": unknown preset '" + v + "'");
         c.train.preset = *p;
       }},
      {"train.schedule",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.train.schedule = train::parse_schedule(v);
         } catch (const std::invalid_argument& e) {
           throw UsageError("setting " + k + ": " + e.what());
         }
       }},
      {"encoder.d_model", num<std::size_t>([](RunConfig& c) -> auto& { return c.encoder.d_model; })},
      {"encoder.layers", num<std::size_t>([](RunConfig& c) -> auto& { return c.encoder.layers; })},
      {"encoder.heads", num<std::size_t>([](RunConfig& c) -> auto& { return c.encoder.heads; })},
      {"encoder.max_len", num<std::size_t>([](RunConfig& c) -> auto& { return c.encoder.max_len; })},
      {"encoder.ffn_width", num<std::size_t>([](RunConfig& c) -> auto& { return c.encoder.ffn_width; })},
      {"encoder.seed", num<std::uint64_t>([](RunConfig& c) -> auto& { return c.encoder.seed; })},
      {"fusion.d_object",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.fusion.d_object = parse_number<std::size_t>(k, v);
         c.d_object_set = true;
       }},
      {"fusion.d_shared", num<std::size_t>([](RunConfig& c) -> auto& { return c.fusion.d_shared; })},
      {"fusion.blocks", num<std::size_t>([](RunConfig& c) -> auto& { return c.fusion.blocks; })},
      {"fusion.heads", num<std::size_t>([](RunConfig& c) -> auto& { return c.fusion.heads; })},
      {"fusion.ffn_width", num<std::size_t>([](RunConfig& c) -> auto& { return c.fusion.ffn_width; })},
      {"fusion.seed", num<std::uint64_t>([](RunConfig& c) -> auto& { return c.fusion.seed; })},
      {"eval.ks",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.ks = parse_list<std::size_t>(k, v); }},
      {"eval.iou_threshold", num<double>([](RunConfig& c) -> auto& { return c.eval.iou_threshold; })},
      {"eval.window", num<int>([](RunConfig& c) -> auto& { return c.eval.window; })},
      {"eval.confidence",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.confidence = parse_bool(k, v); }},
      {"eval.lengths",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.lengths = parse_list<int>(k, v); }},
  };
  return b;
}

}  // namespace detail

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::binders()) out.push_back(k);
  return out;
}

inline RunConfig resolve(const Settings& s) {
  RunConfig c;
  for (const auto& [k, v] : s) {
    const auto it = detail::binders().find(k);
    if (it == detail::binders().end()) throw UsageError("unknown setting '" + k + "'");
    it->second(c, k, v);
  }
  try {
    c.synth.validate();
    c.train.validate();
    c.encoder.validate();
    c.fusion.validate();
    c.eval.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline Json to_json(const synth::SynthConfig& c) {
  return {{"dialogues", c.dialogues},
          {"min_utterances", c.min_utterances},
          {"max_utterances", c.max_utterances},
          {"object_vocab", c.object_vocab},
          {"scene_objects", c.scene_objects},
          {"candidates", c.candidates},
          {"min_frames_per_utterance", c.min_frames_per_utterance},
          {"max_frames_per_utterance", c.max_frames_per_utterance},
          {"pronoun_rate", c.pronoun_rate},
          {"zero_rate", c.zero_rate},
          {"feature_dim", c.feature_dim},
          {"feature_noise", c.feature_noise},
          {"seed", c.seed}};
}

}  // namespace mmrr::app
