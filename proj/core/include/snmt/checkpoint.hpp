#pragma once

// Single-file model container:
//
//   "SNMTCKPT" magic, u8 version
//   model config (embedding spec, sizes, decoders)
//   vocabulary hashes (role, u64) and free-form metadata (key, value)
//   parameter arrays: name, u8 rank, u64 extents, little-endian f64 payload
//
// Integers are little-endian; strings are u32 length + bytes.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snmt/model.hpp"

namespace snmt {

inline constexpr char kCheckpointMagic[8] = {'S', 'N', 'M', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  std::map<std::string, std::uint64_t> vocabulary_hashes;
  std::map<std::string, std::string> metadata;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace snmt
