#pragma once

#include <cstdint>
#include <string>

#include "atb/tensor.hpp"

namespace atb {

// ATBT container: "ATBT" magic, a version integer, a length-prefixed JSON
// header (kind, config snapshot, optional run-config snapshot, tensor
// directory with byte offsets, payload hash), then the tensor payloads as raw
// little-endian 32-bit floats in directory order. The payload hash is checked
// on load.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string kind;             // "supernet" | "model" | "latency_predictor"
  std::string config_json;      // kind-specific configuration (JSON object text)
  std::string run_config_json;  // optional embedded run-config snapshot
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamMap& tensors);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ParamMap tensors;
  std::uint64_t payload_hash = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

std::uint64_t file_content_hash(const std::string& path);  // FNV-1a over all bytes
std::string hash_hex(std::uint64_t h);

}  // namespace atb
