#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/model/models.hpp"

// Checkpoint file layout (little-endian):
//   "RFCK" | u32 version | u64 header length | header JSON | parameter blob
// The header carries config, label set, seed, step count, vocabulary and a
// manifest of {name, shape, offset} entries into the float32 blob.
namespace mmrr::model {

using Json = nlohmann::ordered_json;

inline constexpr char kCheckpointMagic[4] = {'R', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointParam {
  std::string name;
  num::Shape shape;
  std::vector<float> data;
  friend bool operator==(const CheckpointParam&, const CheckpointParam&) = default;
};

struct Checkpoint {
  std::string kind;  // "trr" or "mrr"
  Json config;
  std::vector<std::string> labels;
  std::string preset;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<std::string> vocab;
  Json metadata = Json::object();
  std::vector<CheckpointParam> params;

  const CheckpointParam* find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

inline Json to_json(const EncoderConfig& c) {
  return {{"d_model", c.d_model}, {"layers", c.layers},       {"heads", c.heads},
          {"max_len", c.max_len}, {"ffn_width", c.ffn_width}, {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from(const Json& j) {
  EncoderConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline Json to_json(const FusionConfig& c) {
  return {{"d_text", c.d_text}, {"d_object", c.d_object},   {"d_shared", c.d_shared}, {"blocks", c.blocks},
          {"heads", c.heads},   {"ffn_width", c.ffn_width}, {"seed", c.seed}};
}

inline FusionConfig fusion_config_from(const Json& j) {
  FusionConfig c;
  c.d_text = j.at("d_text").get<std::size_t>();
  c.d_object = j.at("d_object").get<std::size_t>();
  c.d_shared = j.at("d_shared").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline void append_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_le(const std::string& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  Json header;
  header["kind"] = ck.kind;
  header["config"] = ck.config;
  header["labels"] = ck.labels;
  header["preset"] = ck.preset;
  header["seed"] = ck.seed;
  header["step"] = ck.step;
  header["metadata"] = ck.metadata;
  header["vocab"] = ck.vocab;
  Json manifest = Json::array();
  std::string blob;
  for (const auto& p : ck.params) {
    manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", blob.size()}});
    for (float f : p.data) detail::append_le(blob, std::bit_cast<std::uint32_t>(f), 4);
  }
  header["manifest"] = manifest;
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::append_le(out, kCheckpointVersion, 4);
  detail::append_le(out, h.size(), 8);
  out += h;
  out += blob;
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const auto version = detail::read_le(bytes, pos, 4);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = detail::read_le(bytes, pos, 8);
  if (pos + hlen > bytes.size()) throw CheckpointError("checkpoint header truncated");
  Json header;
  try {
    header = Json::parse(bytes.substr(pos, hlen));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  const std::size_t blob = pos + hlen;
  Checkpoint ck;
  try {
    ck.kind = header.at("kind").get<std::string>();
    ck.config = header.at("config");
    ck.labels = header.at("labels").get<std::vector<std::string>>();
    ck.preset = header.at("preset").get<std::string>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.step = header.at("step").get<std::uint64_t>();
    ck.metadata = header.at("metadata");
    ck.vocab = header.at("vocab").get<std::vector<std::string>>();
    for (const auto& m : header.at("manifest")) {
      CheckpointParam p;
      p.name = m.at("name").get<std::string>();
      p.shape = m.at("shape").get<num::Shape>();
      std::size_t off = blob + m.at("offset").get<std::size_t>();
      p.data.resize(num::shape_size(p.shape));
      for (float& f : p.data) f = std::bit_cast<float>(static_cast<std::uint32_t>(detail::read_le(bytes, off, 4)));
      ck.params.push_back(std::move(p));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

// 64-bit FNV-1a, hex; identifies checkpoint files in run manifests.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

template <class T>
std::vector<CheckpointParam> capture_parameters(const ParameterStore<T>& store) {
  std::vector<CheckpointParam> out;
  for (const auto& [name, var] : store.entries()) {
    CheckpointParam p{name, var.value().shape(), {}};
    p.data.reserve(var.value().size());
    for (T v : var.value().data()) p.data.push_back(static_cast<float>(v));
    out.push_back(std::move(p));
  }
  return out;
}

// Every parameter in `store` must be present in `ck` with the same shape.
template <class T>
void restore_parameters(ParameterStore<T>& store, const Checkpoint& ck) {
  for (const auto& [name, var] : store.entries()) {
    const auto* p = ck.find(name);
    if (!p) throw CheckpointError("checkpoint lacks parameter " + name);
    if (p->shape != var.value().shape())
      throw CheckpointError("parameter " + name + " has shape " + num::shape_string(p->shape) + ", model expects " +
                            num::shape_string(var.value().shape()));
    auto v = var;
    for (std::size_t i = 0; i < p->data.size(); ++i) v.mutable_value()[i] = static_cast<T>(p->data[i]);
  }
}

template <class T>
Checkpoint make_checkpoint(const TrrModel<T>& model, const LabelSet& labels, std::string preset,
                           std::uint64_t seed, std::uint64_t step) {
  Checkpoint ck;
  ck.kind = "trr";
  ck.config = {{"encoder", to_json(model.config())}};
  ck.labels = labels.names();
  ck.preset = std::move(preset);
  ck.seed = seed;
  ck.step = step;
  ck.vocab = model.vocab().tokens();
  ck.params = capture_parameters(model.parameters());
  return ck;
}

template <class T>
Checkpoint make_checkpoint(const MrrModel<T>& model, const LabelSet& labels, std::string preset,
                           std::uint64_t seed, std::uint64_t step) {
  Checkpoint ck;
  ck.kind = "mrr";
  ck.config = {{"encoder", to_json(model.config().encoder)}, {"fusion", to_json(model.config().fusion)}};
  ck.labels = labels.names();
  ck.preset = std::move(preset);
  ck.seed = seed;
  ck.step = step;
  ck.vocab = model.vocab().tokens();
  ck.params = capture_parameters(model.parameters());
  return ck;
}

template <class T>
TrrModel<T> trr_model_from(const Checkpoint& ck) {
  if (ck.kind != "trr") throw CheckpointError("expected a trr checkpoint, got " + ck.kind);
  TrrModel<T> m(Vocab::from_tokens(ck.vocab), encoder_config_from(ck.config.at("encoder")));
  restore_parameters(m.parameters(), ck);
  return m;
}

template <class T>
MrrModel<T> mrr_model_from(const Checkpoint& ck) {
  if (ck.kind != "mrr") throw CheckpointError("expected an mrr checkpoint, got " + ck.kind);
  MrrConfig cfg{encoder_config_from(ck.config.at("encoder")), fusion_config_from(ck.config.at("fusion"))};
  MrrModel<T> m(Vocab::from_tokens(ck.vocab), cfg);
  restore_parameters(m.parameters(), ck);
  return m;
}

}  // namespace mmrr::model
