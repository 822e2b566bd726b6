#pragma once

// Shape trace of a configuration: loss-network taps, geometry discriminator
// layers with their concatenation arithmetic, and parameter counts.

#include "s2p/config.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace s2p {

struct GeometryLayerTrace {
  int64_t conv_channels_in = 0;  // from the previous layer (or tap1)
  int64_t tap_channels_in = 0;   // concatenated tap, 0 when none
  int64_t channels_out = 0;
  int64_t size_in = 0;
  int64_t size_out = 0;
  int64_t stride = 0;
};

struct ArchitectureTrace {
  int64_t resolution = 0;
  std::array<int64_t, 3> tap_sizes{};
  std::array<int64_t, 3> tap_channels{};
  std::vector<GeometryLayerTrace> geometry_layers;
  int64_t generator_parameters = 0;
  int64_t residual_blocks = 0;
  int64_t patch_parameters = 0;
  int64_t patch_output_size = 0;
  int64_t geometry_parameters = 0;
  int64_t loss_network_parameters = 0;
  std::string fingerprint;
};

/// Builds the networks of cfg (untrained) and records their shapes. Throws
/// Config for a resolution the loss network cannot tap.
ArchitectureTrace trace_architecture(const RunConfig& cfg);

std::string render_trace(const ArchitectureTrace& t);

}  // namespace s2p
