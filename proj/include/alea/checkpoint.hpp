#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"

namespace alea {

inline constexpr int kCheckpointVersion = 1;

inline std::string checkpoint_filename(uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "gen%05llu.state", static_cast<unsigned long long>(index));
  return buf;
}

inline std::string checksum_hex(std::string_view s) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
  return buf;
}

// A checkpoint is one JSON document: version, checksum of the canonical state
// dump, and the state itself. nlohmann's dump() sorts keys and emits shortest
// round-tripping doubles, so encode(decode(bytes)) is byte-identical.
inline std::string checkpoint_encode(const nlohmann::json& state) {
  nlohmann::json doc;
  doc["Format Version"] = kCheckpointVersion;
  doc["Checksum"] = checksum_hex(state.dump());
  doc["State"] = state;
  return doc.dump() + "\n";
}

inline nlohmann::json checkpoint_decode(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "not a JSON document");
  if (!doc.contains("Format Version") || !doc.at("Format Version").is_number_integer())
    throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "missing format version");
  const int version = doc.at("Format Version").get<int>();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "format version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  if (!doc.contains("Checksum") || !doc.contains("State"))
    throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "missing checksum or state");
  const std::string expect = doc.at("Checksum").get<std::string>();
  const std::string actual = checksum_hex(doc.at("State").dump());
  if (expect != actual)
    throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint,
                          "checksum mismatch: header " + expect + ", content " + actual);
  return doc.at("State");
}

// Writes gen#####.state and repoints `latest`, both atomically, so a crash
// mid-write can never lose the previous generation.
inline void checkpoint_write(const std::filesystem::path& dir, uint64_t index, const nlohmann::json& state) {
  std::filesystem::create_directories(dir);
  const std::string name = checkpoint_filename(index);
  write_file_atomic(dir / name, checkpoint_encode(state));
  write_file_atomic(dir / "latest", name + "\n");
}

inline nlohmann::json checkpoint_read(const std::filesystem::path& file) {
  return checkpoint_decode(read_file(file));
}

inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  auto content = try_read_file(dir / "latest");
  if (!content) return std::nullopt;
  std::string name = *content;
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r' || name.back() == ' '))
    name.pop_back();
  if (name.empty()) return std::nullopt;
  return dir / name;
}

}  // namespace alea
