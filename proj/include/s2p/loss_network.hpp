#pragma once

// The frozen feature extractor whose taps define the perceptual distance and
// feed the geometry discriminators.

#include "s2p/networks.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace s2p {

enum class LossNetworkProvider { ImportedWeights, SyntheticTrained, FixedRandom };

const char* to_string(LossNetworkProvider p);
LossNetworkProvider parse_loss_network_provider(const std::string& s);

struct LossNetworkConfig {
  LossNetworkProvider provider = LossNetworkProvider::FixedRandom;
  /// Channel width of each of the five conv+pool stages.
  std::array<int64_t, 5> stage_widths{64, 128, 256, 512, 512};
  std::array<int64_t, 5> convs_per_stage{2, 2, 3, 3, 3};
  /// 1-based pooling stages whose outputs are the three taps.
  std::array<int64_t, 3> tap_stages{3, 4, 5};
  uint64_t seed = 17;
  /// Source for ImportedWeights.
  std::string weights_path;
  /// Per-channel affine adapter applied to [-1, 1] images: (x - mean) / std.
  std::array<float, 3> input_mean{0.f, 0.f, 0.f};
  std::array<float, 3> input_std{1.f, 1.f, 1.f};

  /// Throws Config when the tap stages do not form a consecutive halving chain.
  void validate() const;
};

/// Labelled renders used to train the SyntheticTrained provider.
struct IdentityTrainingSet {
  torch::Tensor train_images;  // [N, 3, R, R] in [-1, 1]
  torch::Tensor train_labels;  // [N] int64
  torch::Tensor held_out_images;
  torch::Tensor held_out_labels;
  int64_t num_classes = 0;
  int64_t epochs = 12;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  double min_accuracy = 0.9;
};

/// VGG-style conv stack with five max-pooling stages.
class VggTrunkImpl : public torch::nn::Module {
 public:
  explicit VggTrunkImpl(const LossNetworkConfig& cfg);
  /// Returns the pooled output of every stage.
  std::vector<torch::Tensor> forward_stages(const torch::Tensor& x, int64_t last_stage);

 private:
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(VggTrunk);

/// Frozen loss network. Copies share the same (immutable) weights.
class LossNetwork {
 public:
  explicit LossNetwork(LossNetworkConfig cfg);

  const LossNetworkConfig& config() const { return cfg_; }
  /// Accuracy measured on held-out renders before freezing (SyntheticTrained only).
  std::optional<double> training_accuracy() const { return training_accuracy_; }

  /// Throws Config unless the resolution divides by 2^tap3_stage and leaves a
  /// tap1 of at least 8 pixels.
  void check_resolution(int64_t resolution) const;
  std::array<int64_t, 3> tap_sizes(int64_t resolution) const;
  std::array<int64_t, 3> tap_channels() const;

  /// Gradients flow to x; the loss-network weights never require grad.
  FeatureTaps extract_taps(const torch::Tensor& x) const;

  /// Global-mean-pooled tap3, L2-normalised: [B, C3].
  torch::Tensor embedding(const torch::Tensor& x) const;

  uint64_t checksum() const;
  int64_t parameter_count() const;
  torch::nn::Module& module() const { return *trunk_; }

  /// Deep copy converted to another floating dtype (used by gradient checks).
  LossNetwork to(torch::Dtype dtype) const;

  void save(const std::string& path) const;

 private:
  friend LossNetwork build_loss_network(const LossNetworkConfig&, const IdentityTrainingSet*);
  void freeze();

  LossNetworkConfig cfg_;
  mutable VggTrunk trunk_{nullptr};
  std::optional<double> training_accuracy_;
};

/// Builds a frozen loss network from the configured provider.
///  - FixedRandom: seeded initialisation, reproducible.
///  - ImportedWeights: loads cfg.weights_path (Load error when missing/corrupt).
///  - SyntheticTrained: trains an identity classifier on `data`, then freezes
///    the trunk. Throws Config when held-out accuracy misses data->min_accuracy.
LossNetwork build_loss_network(const LossNetworkConfig& cfg, const IdentityTrainingSet* data = nullptr);

}  // namespace s2p
