#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "induction/model.hpp"

namespace induction {

inline constexpr const char* kCheckpointVersion = "induction-ckpt/1";

struct CheckpointEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t offset = 0;  // bytes from the start of the payload
};

/// Layout: 8-byte magic "INDCKPT\0", little-endian u64 manifest length, JSON
/// manifest, then every matrix as row-major little-endian float64.
struct Checkpoint {
  std::string version;
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> entries;
  TransformerParams params;
};

/// Bytes of the serialized model; identical params and meta give identical bytes.
std::string serialize_checkpoint(const TransformerParams& params, const std::map<std::string, std::string>& meta = {});
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TransformerParams& params, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Pretty-printed manifest of a checkpoint file, without reading matrices.
std::string inspect_checkpoint(const std::filesystem::path& path);

}  // namespace induction
