#pragma once

// Generator, patch discriminator and geometry discriminator definitions.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <vector>

namespace s2p {

/// Three loss-network feature maps with halving spatial sizes, each [B, C, H, W].
struct FeatureTaps {
  torch::Tensor tap1;
  torch::Tensor tap2;
  torch::Tensor tap3;

  FeatureTaps detach() const { return {tap1.detach(), tap2.detach(), tap3.detach()}; }
};

/// Throws Dimension unless tap2/tap3 halve the spatial size of the previous
/// tap exactly and all three share the batch size.
void check_halving_chain(const FeatureTaps& taps);

/// Supported image resolutions: powers of two, at least 32.
bool is_power_of_two(int64_t v);

struct GeneratorSpec {
  int64_t resolution = 256;
  int64_t base_width = 64;
  /// 0 selects the resolution default: 9 at 256 and above, 6 below.
  int64_t residual_blocks = 0;

  int64_t resolved_blocks() const;
  void validate() const;
};

struct PatchDiscriminatorSpec {
  int64_t base_width = 64;
};

struct GeometryDiscriminatorSpec {
  /// Widths of the hidden convolutions, in order. Cycled from the last entry
  /// when the depth rule needs more layers than listed.
  std::vector<int64_t> conv_widths{256, 512, 512, 512};
  bool instance_norm = true;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Residual encoder-decoder: 7x7 stem, two stride-2 downsamplings, N residual
/// blocks, two transposed-conv upsamplings, 7x7 head with tanh.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Generator);

/// 70x70 PatchGAN: three stride-2 and two stride-1 4x4 convolutions,
/// sigmoid output. 256 -> 30x30 map, 64 -> 6x6.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const PatchDiscriminatorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  static int64_t output_size(int64_t input_size);

 private:
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Discriminator over loss-network taps. Every convolution has kernel 4,
/// stride 2 and padding 1. tap2 joins conv1's output along channels and tap3
/// joins conv2's output; log2(tap1 size) convolutions reduce to one
/// probability per image.
class GeometryDiscriminatorImpl : public torch::nn::Module {
 public:
  GeometryDiscriminatorImpl(const GeometryDiscriminatorSpec& spec, std::array<int64_t, 3> tap_channels,
                            int64_t tap1_size);

  /// Returns [B] probabilities.
  torch::Tensor forward(const FeatureTaps& taps);

  int64_t layer_count() const { return static_cast<int64_t>(convs_.size()); }
  /// Channel count entering convolution `i` (after any concatenation).
  int64_t input_channels(int64_t i) const;
  int64_t output_channels(int64_t i) const;
  std::vector<int64_t> strides() const;
  int64_t tap1_size() const { return tap1_size_; }

 private:
  std::array<int64_t, 3> tap_channels_;
  int64_t tap1_size_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::InstanceNorm2d> norms_;  // empty holder where unused
};
TORCH_MODULE(GeometryDiscriminator);

/// Number of geometry discriminator convolutions for a given tap1 spatial size.
int64_t geometry_layer_count(int64_t tap1_size);

int64_t parameter_count(const torch::nn::Module& module);

/// FNV-1a over every parameter and buffer, in registration order.
uint64_t module_checksum(const torch::nn::Module& module);

}  // namespace s2p
