#pragma once

// Run configuration: a YAML document with sections data, model, train and
// eval. Every key has a default; unknown keys are rejected.

#include "s2p/loss_network.hpp"
#include "s2p/losses.hpp"
#include "s2p/networks.hpp"
#include "s2p/synthetic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace s2p {

enum class TrainMode { Full, NoGeometry, CycleGanBaseline };

const char* to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct DataConfig {
  std::string manifest;
  int64_t resolution = 256;
  bool flip = false;
  int workers = 1;
};

struct ModelConfig {
  int64_t generator_width = 64;
  int64_t residual_blocks = 0;  // 0: resolution default
  int64_t patch_width = 64;
  std::vector<int64_t> geometry_widths{256, 512, 512, 512};
  bool geometry_instance_norm = true;
  LossNetworkConfig phi;
  /// Used by the synthetic-trained provider.
  IdentitySetOptions phi_identities;
  int64_t phi_epochs = 12;
};

struct TrainConfig {
  int64_t epochs = 200;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  TrainMode mode = TrainMode::Full;
  LossWeights weights;
  uint64_t seed = 0;
  int64_t pool_size = 50;
  int64_t batch_size = 1;
  /// Linear decay to zero over the second half of training when enabled.
  bool linear_decay = false;
  /// 0: max(1, epochs / 10).
  int64_t checkpoint_every = 0;

  int64_t resolved_checkpoint_every() const;
};

struct EvalConfig {
  int64_t repeats = 10;
  /// Retrain every mode on a fresh split per repeat instead of resampling
  /// probes against fixed checkpoints.
  bool retrain = false;
  uint64_t seed = 0;
  int64_t realism_steps = 300;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  /// Throws Usage / Config on invalid values.
  void validate() const;

  GeneratorSpec generator_spec() const;
  PatchDiscriminatorSpec patch_spec() const;
  GeometryDiscriminatorSpec geometry_spec() const;

  /// Hash over everything that determines network shapes.
  std::string architecture_fingerprint() const;
};

/// Dotted names of every key, in dump order ("train.epochs", ...).
std::vector<std::string> config_keys();

/// Merges a YAML document into cfg. Throws Usage naming any unknown key.
void apply_config_yaml(RunConfig& cfg, const std::string& yaml_text);
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Sets one dotted key from a YAML scalar/sequence literal.
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& dotted_key);

/// Full resolved configuration as YAML; re-applying it reproduces cfg.
std::string dump_config(const RunConfig& cfg);

}  // namespace s2p
