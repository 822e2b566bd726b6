#include "s2p/losses.hpp"

#include "s2p/error.hpp"
#include "s2p/loss_network.hpp"
#include "s2p/networks.hpp"

#include <cmath>
#include <sstream>

namespace s2p {

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    fail(ErrorKind::Dimension, std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  require(a.numel() > 0, ErrorKind::Dimension, std::string(what) + ": empty input");
}

void require_probabilities(const torch::Tensor& scores, const char* what) {
  require(scores.numel() > 0, ErrorKind::Dimension, std::string(what) + ": empty score map");
  auto s = scores.detach();
  // NaN scores come from a diverged network, not from a caller mistake.
  require(!torch::isnan(s).any().item<bool>(), ErrorKind::Divergence, std::string(what) + ": non-finite scores");
  const bool bad = torch::logical_or(s < 0, s > 1).any().item<bool>();
  require(!bad, ErrorKind::Domain, std::string(what) + ": scores outside [0, 1]");
}

torch::Tensor clamp_probability(const torch::Tensor& p) {
  return p.clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

}  // namespace

void LossWeights::validate(bool for_training) const {
  for (double v : {lambda_cyc, lambda_geo, lambda_patch}) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::Usage, "loss weights must be finite and non-negative");
  }
  if (for_training) require(lambda_cyc > 0.0, ErrorKind::Usage, "lambda_cyc must be positive for training");
}

std::array<std::pair<std::string_view, double>, 7> LossBreakdown::items() const {
  return {{{kNames[0], adv_patch_x},
           {kNames[1], adv_patch_y},
           {kNames[2], adv_geo_x},
           {kNames[3], adv_geo_y},
           {kNames[4], cyc_x},
           {kNames[5], cyc_y},
           {kNames[6], total}}};
}

namespace losses {

torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "perceptual_distance");
  return (a - b).square().mean();
}

torch::Tensor perceptual_distance_per_sample(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "perceptual_distance_per_sample");
  require(a.dim() >= 2, ErrorKind::Dimension, "perceptual_distance_per_sample: expected a batch dimension");
  return (a - b).square().flatten(1).mean(1);
}

torch::Tensor perceptual_taps_loss(const FeatureTaps& a, const FeatureTaps& b) {
  return (perceptual_distance(a.tap1, b.tap1) + perceptual_distance(a.tap2, b.tap2) +
          perceptual_distance(a.tap3, b.tap3)) /
         3.0;
}

torch::Tensor perceptual_taps_loss_per_sample(const FeatureTaps& a, const FeatureTaps& b) {
  return (perceptual_distance_per_sample(a.tap1, b.tap1) + perceptual_distance_per_sample(a.tap2, b.tap2) +
          perceptual_distance_per_sample(a.tap3, b.tap3)) /
         3.0;
}

torch::Tensor perceptual_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const LossNetwork& phi) {
  require_same_shape(x, x_hat, "perceptual_cycle_loss");
  require(x.dim() == 4, ErrorKind::Dimension, "perceptual_cycle_loss: expected [B, C, H, W]");
  phi.check_resolution(x.size(2));
  return perceptual_taps_loss(phi.extract_taps(x), phi.extract_taps(x_hat));
}

torch::Tensor pixel_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
  require_same_shape(x, x_hat, "pixel_cycle_loss");
  return (x - x_hat).abs().mean();
}

torch::Tensor adversarial_loss_discriminator(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  require_probabilities(real_scores, "adversarial_loss_discriminator(real)");
  require_probabilities(fake_scores, "adversarial_loss_discriminator(fake)");
  return -(clamp_probability(real_scores).log().mean() + (1.0 - clamp_probability(fake_scores)).log().mean());
}

torch::Tensor adversarial_loss_generator(const torch::Tensor& fake_scores) {
  require_probabilities(fake_scores, "adversarial_loss_generator");
  return -clamp_probability(fake_scores).log().mean();
}

LossBreakdown full_objective(const ObjectiveTerms<double>& terms, const LossWeights& weights) {
  weights.validate(false);
  LossBreakdown out;
  out.adv_patch_x = terms.adv_patch_x;
  out.adv_patch_y = terms.adv_patch_y;
  out.adv_geo_x = terms.adv_geo_x;
  out.adv_geo_y = terms.adv_geo_y;
  out.cyc_x = terms.cyc_x;
  out.cyc_y = terms.cyc_y;
  for (const auto& [name, value] : out.items()) {
    if (name != "total" && !std::isfinite(value)) {
      fail(ErrorKind::Divergence, "non-finite loss term " + std::string(name));
    }
  }
  out.total = weighted_total(terms, weights);
  return out;
}

}  // namespace losses
}  // namespace s2p
