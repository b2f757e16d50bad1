#pragma once

#include "crossvae/training.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossvae {

// Binary layout (all integers little-endian):
//   "CVAECKPT"  u32 version  u32 meta_len  meta (UTF-8 JSON)
//   u32 tensor_count, then per tensor:
//     u32 name_len  name  u32 rank  u32 dims[rank]  f32 values[prod(dims)]
// Parameters come first in registration order, then one "rmsprop/<name>"
// accumulator per parameter.

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace crossvae
