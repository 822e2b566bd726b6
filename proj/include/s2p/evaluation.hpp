#pragma once

// Machine-computable comparison metrics: feature-space distance to ground
// truth, rank-1 identification against a photo gallery, and a discriminator
// based realism proxy.

#include "s2p/config.hpp"
#include "s2p/data.hpp"
#include "s2p/loss_network.hpp"
#include "s2p/networks.hpp"
#include "s2p/training.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

namespace s2p {

/// Mean over pairs of the three-tap feature distance between outputs[i] and
/// ground_truth[i]. Throws Dimension on a count mismatch.
double semantic_accuracy(const torch::Tensor& outputs, const torch::Tensor& ground_truth, const LossNetwork& phi);

struct Gallery {
  std::vector<std::string> ids;
  torch::Tensor embeddings;  // [N, D], unit rows

  /// Throws Protocol for duplicate ids or non-unit embeddings.
  void validate() const;
};

Gallery build_gallery(std::vector<std::string> ids, const torch::Tensor& photos, const LossNetwork& phi);

/// Index of the most cosine-similar gallery row for each probe row.
std::vector<int64_t> nearest_gallery(const torch::Tensor& probe_embeddings, const Gallery& gallery);

/// Percent of probes whose nearest gallery embedding shares their id.
/// Throws Protocol when a probe id is not in the gallery.
double rank1_accuracy(const torch::Tensor& probe_embeddings, const std::vector<std::string>& probe_ids,
                      const Gallery& gallery);

struct RepeatedAccuracy {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single repeat
  std::vector<double> per_repeat;
  std::vector<uint64_t> seeds;
};

RepeatedAccuracy summarize_repeats(std::vector<double> values, std::vector<uint64_t> seeds);

/// Evaluation-only protocol: each repeat draws a random selection (with
/// replacement) of the probes and scores it against the whole gallery.
RepeatedAccuracy identification_accuracy(const torch::Tensor& probe_embeddings,
                                         const std::vector<std::string>& probe_ids, const Gallery& gallery,
                                         int64_t n_repeats, uint64_t seed);

/// n unit vectors in R^dim drawn from an isotropic Gaussian.
torch::Tensor random_unit_embeddings(int64_t n, int64_t dim, Rng& rng);

/// Two-sided Welch t-test p-value for equal means.
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Patch discriminator trained once on real photos vs baseline fakes and
/// then only used for scoring.
class RealismReference {
 public:
  RealismReference(int64_t base_width, uint64_t seed);

  void train(const torch::Tensor& real, const torch::Tensor& fake, int64_t steps, int64_t batch_size = 8,
             double learning_rate = 2e-4);
  bool trained() const { return trained_; }

  /// Per-image mean probability of "real". Throws Protocol before train().
  std::vector<double> scores(const torch::Tensor& images) const;
  double mean_score(const torch::Tensor& images) const;

 private:
  mutable PatchDiscriminator net_{nullptr};
  uint64_t seed_;
  bool trained_ = false;
};

struct EvalReport {
  std::string method_name;
  std::string checkpoint;
  double semantic_accuracy = 0.0;
  /// Same metric under a seeded random loss network of the same shape.
  double semantic_accuracy_fixed_random = 0.0;
  RepeatedAccuracy identification;
  /// Mean reference-discriminator probability of "real"; not a human study.
  double realism_proxy = 0.0;
  double realism_proxy_real_reference = 0.0;
  double realism_proxy_p_value = 0.0;
  int64_t n_repeats = 0;

  /// Throws Protocol when an invariant (ranges, repeat count) is violated.
  void validate() const;
};

nlohmann::json to_json(const EvalReport& r);
/// Top-level field names every serialized report carries, in order.
const std::vector<std::string>& report_fields();
/// Throws Protocol unless `j` has exactly the report fields with sane types.
void validate_report_json(const nlohmann::json& j);

/// Aligned plain-text comparison table, one row per report.
std::string render_table(const std::vector<EvalReport>& reports);

/// Order in which methods appear in tables and grids.
const std::vector<TrainMode>& comparison_order();

struct CompareOptions {
  int64_t repeats = 10;
  uint64_t seed = 0;
  int64_t realism_steps = 300;
  /// Retrain every mode on a fresh identity split per repeat (each with the
  /// configuration stored in its checkpoint) instead of resampling probes.
  bool retrain = false;
  bool write_grids = true;
};

struct ComparisonResult {
  std::vector<EvalReport> reports;  // in comparison_order()
  std::string report_path;
  std::string table_path;
  std::vector<std::string> grid_paths;
};

/// Evaluates one checkpoint per mode on the manifest's test split. Writes
/// out_dir/report.json, out_dir/table.txt and out_dir/grids/<id>.png (columns:
/// sketch, ground truth, full, no_geometry, cyclegan_baseline). The full
/// mode's loss network defines the feature space for every method. Throws
/// Protocol when a mode is missing. Retrained runs go to out_dir/repeats/.
ComparisonResult compare_methods(const std::map<TrainMode, std::string>& checkpoints, const DatasetManifest& manifest,
                                 const std::string& out_dir, const CompareOptions& opts);

}  // namespace s2p
