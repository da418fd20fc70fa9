// Versioned named-tensor checkpoint container. Layout: magic "RCMP", u32
// format version, u32 model kind, length-prefixed config text (JSON), u32
// tensor count, entries sorted by name (length-prefixed UTF-8 name, u8 dtype
// code, u8 rank, u32 dims, little-endian f32 payload), trailing CRC32 of all
// preceding bytes.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "recomp/tensor.hpp"

namespace recomp {

enum class ModelKind : uint32_t { VqVae = 1, Prior = 2 };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::VqVae ? "vqvae" : "prior";
}

struct CheckpointData {
  ModelKind kind = ModelKind::VqVae;
  std::string config_json;
  std::map<std::string, Tensor<float>> tensors;  // map keeps names sorted
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);

// Validates magic, version and CRC; kind checks happen in the typed loaders.
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Loads and verifies the model kind tag.
CheckpointData load_checkpoint(const std::filesystem::path& path, ModelKind expected);

}  // namespace recomp
