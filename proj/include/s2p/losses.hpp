#pragma once

// Loss terms of the perceptual cycle objective. Everything here is a pure
// function of its arguments and differentiable through torch autograd.

#include <torch/torch.h>

#include <array>
#include <string_view>
#include <utility>

namespace s2p {

class LossNetwork;
struct FeatureTaps;

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbabilityEpsilon = 1e-7;

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_geo = 1.0;
  double lambda_patch = 1.0;

  /// Throws Usage when a weight is negative or lambda_cyc is zero
  /// (`for_training`) or non-finite.
  void validate(bool for_training = true) const;
};

/// The six per-direction terms of the composite objective.
template <class T>
struct ObjectiveTerms {
  T adv_patch_x{};
  T adv_patch_y{};
  T adv_geo_x{};
  T adv_geo_y{};
  T cyc_x{};
  T cyc_y{};
};

template <class T>
T weighted_total(const ObjectiveTerms<T>& t, const LossWeights& w) {
  return (t.adv_patch_x + t.adv_patch_y) * w.lambda_patch + (t.adv_geo_x + t.adv_geo_y) * w.lambda_geo +
         (t.cyc_x + t.cyc_y) * w.lambda_cyc;
}

struct LossBreakdown {
  double adv_patch_x = 0.0;
  double adv_patch_y = 0.0;
  double adv_geo_x = 0.0;
  double adv_geo_y = 0.0;
  double cyc_x = 0.0;
  double cyc_y = 0.0;
  double total = 0.0;

  static constexpr std::array<std::string_view, 7> kNames{"adv_patch_x", "adv_patch_y", "adv_geo_x", "adv_geo_y",
                                                          "cyc_x",       "cyc_y",       "total"};

  std::array<std::pair<std::string_view, double>, 7> items() const;
};

namespace losses {

/// Mean squared difference over all N elements: ||a - b||^2 / N.
/// Batched inputs give the batch mean of the per-sample distances.
torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b);

/// Per-sample perceptual distance for [B, ...] inputs, shape [B].
torch::Tensor perceptual_distance_per_sample(const torch::Tensor& a, const torch::Tensor& b);

/// Mean over the three taps of the perceptual distance.
torch::Tensor perceptual_taps_loss(const FeatureTaps& a, const FeatureTaps& b);
torch::Tensor perceptual_taps_loss_per_sample(const FeatureTaps& a, const FeatureTaps& b);

/// Feature-space cycle loss of a reconstruction against its source.
torch::Tensor perceptual_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const LossNetwork& phi);

/// Mean absolute elementwise difference.
torch::Tensor pixel_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat);

/// -(mean log D(real) + mean log(1 - D(fake))). Scores must already be
/// probabilities; anything outside [0, 1] is a Domain error.
torch::Tensor adversarial_loss_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// Non-saturating generator loss -mean log D(fake).
torch::Tensor adversarial_loss_generator(const torch::Tensor& fake_scores);

/// Weighted composite. Throws Divergence naming the first non-finite term.
LossBreakdown full_objective(const ObjectiveTerms<double>& terms, const LossWeights& weights);

}  // namespace losses
}  // namespace s2p
