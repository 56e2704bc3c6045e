#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ruinscope/tensor.hpp"

namespace ruinscope::nn {

/// Parameter checkpoint container:
///   "RSNN" | u16 version | str metadata_json | u32 count |
///   count x (str name | u32 rank | rank x u32 dim | numel x f32)
/// Integers and floats little-endian; str = u32 length + bytes.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::string metadata_json;
  std::vector<NamedTensor> params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ruinscope::nn
