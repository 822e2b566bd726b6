#pragma once

// Self-describing weight container.
//
// Layout (all integers little-endian):
//   "S2PW"                      magic
//   u32 format_version          currently 1
//   u32 len, bytes              network name
//   u32 len, bytes              metadata (JSON text, may be empty)
//   u32 count                   number of arrays
//   count x { u32 len, name bytes, u32 ndim, i64 dims[ndim], f32 values[] }
//   u64 FNV-1a of every preceding byte

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace s2p {

inline constexpr uint32_t kWeightFormatVersion = 1;

struct WeightFile {
  uint32_t format_version = kWeightFormatVersion;
  std::string network;
  std::string metadata;
  std::vector<std::pair<std::string, torch::Tensor>> arrays;

  const torch::Tensor* find(const std::string& name) const;
};

void write_weight_file(const std::string& path, const WeightFile& file);
/// Throws Load on missing, truncated or checksum-mismatched files.
WeightFile read_weight_file(const std::string& path);

/// Named parameters + buffers of a module, stored as float32.
WeightFile module_to_weights(const torch::nn::Module& module, std::string network, std::string metadata = {});
/// Copies arrays into the module. Every parameter must be present with an
/// identical shape, otherwise Compatibility.
void weights_to_module(const WeightFile& file, torch::nn::Module& module);

uint64_t fnv1a(const void* data, size_t size, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace s2p
