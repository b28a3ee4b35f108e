#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrr/model/checkpoint.hpp"

namespace mmrr::app {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string file_hash(const std::filesystem::path& p) { return model::content_hash(model::read_bytes(p)); }

// Written as manifest.json into every artifact directory. Everything except
// the wall-clock fields is a function of the inputs, config and seeds.
struct RunManifest {
  std::string command;
  Json config = Json::object();
  Json inputs = Json::array();   // [{role, path, hash}]
  Json outputs = Json::array();  // [{path, hash}], paths relative to the directory
  std::vector<std::uint64_t> seeds;
  Json extra = Json::object();
  std::string started_at;
  double wall_clock_s = 0.0;

  void add_input(const std::string& role, const std::filesystem::path& p) {
    inputs.push_back({{"role", role}, {"path", p.string()}, {"hash", file_hash(p)}});
  }
};

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"tool_version", kToolVersion}, {"config", m.config},
          {"inputs", m.inputs},   {"outputs", m.outputs},         {"seeds", m.seeds},
          {"extra", m.extra},     {"started_at", m.started_at},   {"wall_clock_s", m.wall_clock_s}};
}

// Hashes the listed outputs (relative to `dir`) and writes the manifest.
inline void write_manifest(const std::filesystem::path& dir, RunManifest m, const std::vector<std::string>& outputs) {
  for (const auto& o : outputs) m.outputs.push_back({{"path", o}, {"hash", file_hash(dir / o)}});
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << to_json(m).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

// The manifest without wall-clock fields, for reproducibility comparisons.
inline Json manifest_fingerprint(const Json& manifest) {
  Json j = manifest;
  j.erase("started_at");
  j.erase("wall_clock_s");
  return j;
}

}  // namespace mmrr::app
