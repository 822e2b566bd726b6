#pragma once

// Two-cycle adversarial training (X -> Y -> X and Y -> X -> Y), history
// pools, optimiser state, checkpoints and inference.

#include "s2p/config.hpp"
#include "s2p/data.hpp"
#include "s2p/loss_network.hpp"
#include "s2p/losses.hpp"
#include "s2p/networks.hpp"
#include "s2p/random.hpp"

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace s2p {

/// Six trainable networks plus the frozen loss network. X is the sketch
/// domain, Y the photo domain: g_y maps X -> Y, g_x maps Y -> X.
struct ModelBundle {
  explicit ModelBundle(LossNetwork loss_network) : phi(std::move(loss_network)) {}

  Generator g_x{nullptr};
  Generator g_y{nullptr};
  PatchDiscriminator d_x{nullptr};
  PatchDiscriminator d_y{nullptr};
  GeometryDiscriminator dg_x{nullptr};
  GeometryDiscriminator dg_y{nullptr};
  LossNetwork phi;

  /// Named networks in checkpoint order (phi excluded).
  std::vector<std::pair<std::string, torch::nn::Module*>> trainable();
};

/// Builds the loss network described by cfg.model (training it first for the
/// synthetic-trained provider).
LossNetwork prepare_loss_network(const RunConfig& cfg);

/// Fresh networks; each one is initialised from its own sub-seed of `seed`,
/// so the generators start identical across modes for the same seed.
ModelBundle make_bundle(const RunConfig& cfg, LossNetwork phi, uint64_t seed);

/// Capacity-bounded buffer of past generated images.
class HistoryPool {
 public:
  explicit HistoryPool(int64_t capacity) : capacity_(capacity) {}

  /// Per image: while filling, store and return it; once full, with
  /// probability 1/2 return a uniformly drawn stored image (replacing it with
  /// the new one), otherwise return the new image.
  torch::Tensor query(const torch::Tensor& batch, Rng& rng);

  int64_t capacity() const { return capacity_; }
  int64_t size() const { return static_cast<int64_t>(images_.size()); }
  const std::vector<torch::Tensor>& images() const { return images_; }
  void restore(std::vector<torch::Tensor> images);

 private:
  int64_t capacity_;
  std::vector<torch::Tensor> images_;
};

/// Read-only lookup into a weight file's arrays.
class WeightFileView {
 public:
  explicit WeightFileView(const std::vector<std::pair<std::string, torch::Tensor>>& arrays) : arrays_(arrays) {}
  const torch::Tensor& at(const std::string& name) const;

 private:
  const std::vector<std::pair<std::string, torch::Tensor>>& arrays_;
};

/// Adaptive-moment optimiser whose moments are plain tensors so they can be
/// written into checkpoints exactly.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step();
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  int64_t steps() const { return step_; }

  void save_into(const std::string& prefix, std::vector<std::pair<std::string, torch::Tensor>>& arrays) const;
  void load_from(const std::string& prefix, const WeightFileView& file, int64_t steps);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  double lr_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
};

struct DiscriminatorLosses {
  double patch_x = 0.0;
  double patch_y = 0.0;
  double geo_x = 0.0;
  double geo_y = 0.0;
};

struct StepReport {
  LossBreakdown generator;
  DiscriminatorLosses discriminator;
  int discriminator_updates = 0;
};

/// Generator-side objective terms as differentiable tensors (geo terms are
/// zero tensors outside Full mode; cycle terms are pixel losses in
/// CycleGanBaseline mode).
struct GeneratorPass {
  torch::Tensor fake_x, fake_y, rec_x, rec_y;
  ObjectiveTerms<torch::Tensor> terms;
  torch::Tensor total;
};

GeneratorPass generator_pass(ModelBundle& bundle, const torch::Tensor& x, const torch::Tensor& y, TrainMode mode,
                             const LossWeights& weights);

/// Objective value on fixed weights, no parameter update.
LossBreakdown evaluate_objective(ModelBundle& bundle, const torch::Tensor& x, const torch::Tensor& y, TrainMode mode,
                                 const LossWeights& weights);

class Trainer {
 public:
  Trainer(ModelBundle bundle, RunConfig cfg);

  /// One generator update (both generators, joint loss) followed by one
  /// update per active discriminator. Throws Divergence before touching any
  /// weight when a term is non-finite.
  StepReport step(const torch::Tensor& x, const torch::Tensor& y);

  /// Applies the learning-rate schedule for a 0-based epoch.
  void begin_epoch(int64_t epoch);

  ModelBundle& bundle() { return bundle_; }
  const RunConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }

  /// Generator update only / discriminator updates only (exposed for the
  /// update-isolation checks).
  LossBreakdown generator_update(const torch::Tensor& x, const torch::Tensor& y, GeneratorPass* pass_out = nullptr);
  DiscriminatorLosses discriminator_update(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& fake_x,
                                           const torch::Tensor& fake_y, int* updates = nullptr);

  void save_checkpoint(const std::string& dir, int64_t epoch) const;
  /// Restores weights, optimiser moments, pools and RNG state; returns the epoch.
  int64_t load_checkpoint(const std::string& dir);

 private:
  ModelBundle bundle_;
  RunConfig cfg_;
  AdamOptimizer opt_g_;
  AdamOptimizer opt_d_x_;
  AdamOptimizer opt_d_y_;
  AdamOptimizer opt_dg_x_;
  AdamOptimizer opt_dg_y_;
  HistoryPool pool_x_;
  HistoryPool pool_y_;
  Rng rng_;
};

struct CheckpointInfo {
  std::string path;
  int64_t epoch = 0;
  std::string fingerprint;
  RunConfig config;
};

/// Reads checkpoint metadata. Throws Load when absent or malformed.
CheckpointInfo read_checkpoint_info(const std::string& dir);

/// Networks of a checkpoint in inference mode.
ModelBundle load_bundle(const std::string& checkpoint_dir);

struct EpochMetrics {
  int64_t epoch = 0;  // 1-based
  LossBreakdown mean;
  DiscriminatorLosses discriminator;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainingResult {
  std::string final_checkpoint;
  std::string metrics_path;
  std::vector<EpochMetrics> epochs;  // epochs run by this call
  uint64_t phi_checksum_before = 0;
  uint64_t phi_checksum_after = 0;
};

struct TrainingOptions {
  /// Continue from out_dir/checkpoints/LATEST when present.
  bool resume = false;
  /// Stop (as if interrupted) after this many epochs in total; 0 = run all.
  int64_t stop_after_epoch = 0;
  /// Loss network to use instead of building one from the config.
  std::optional<LossNetwork> phi;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Trains on the manifest's train split. Writes out_dir/resolved_config.yaml,
/// out_dir/metrics.jsonl (one JSON record per epoch) and checkpoints under
/// out_dir/checkpoints/epoch_NNNN every max(1, epochs/10) epochs and at the
/// end. On divergence rethrows Divergence naming the last good checkpoint.
TrainingResult run_training(const DatasetManifest& manifest, const RunConfig& cfg, const std::string& out_dir,
                            TrainingOptions opts = {});

enum class Direction { AToB, BToA };
Direction parse_direction(const std::string& s);
const char* to_string(Direction d);

/// Deterministic inference. When `expected_fingerprint` is given and differs
/// from the checkpoint's architecture, throws Compatibility.
torch::Tensor translate(ModelBundle& bundle, const torch::Tensor& images, Direction direction);
torch::Tensor translate(const std::string& checkpoint_dir, const torch::Tensor& images, Direction direction,
                        const std::optional<std::string>& expected_fingerprint = std::nullopt);

/// Latest checkpoint directory under a run directory, if any.
std::optional<std::string> latest_checkpoint(const std::string& run_dir);

}  // namespace s2p
