#include "s2p/loss_network.hpp"

#include "s2p/error.hpp"
#include "s2p/init.hpp"
#include "s2p/weights_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <random>

namespace nn = torch::nn;

namespace s2p {

const char* to_string(LossNetworkProvider p) {
  switch (p) {
    case LossNetworkProvider::ImportedWeights: return "imported-weights";
    case LossNetworkProvider::SyntheticTrained: return "synthetic-trained";
    case LossNetworkProvider::FixedRandom: return "fixed-random";
  }
  return "?";
}

LossNetworkProvider parse_loss_network_provider(const std::string& s) {
  if (s == "imported-weights") return LossNetworkProvider::ImportedWeights;
  if (s == "synthetic-trained") return LossNetworkProvider::SyntheticTrained;
  if (s == "fixed-random") return LossNetworkProvider::FixedRandom;
  fail(ErrorKind::Usage, "unknown loss network provider '" + s + "'");
}

void LossNetworkConfig::validate() const {
  for (size_t i = 0; i < 5; ++i) {
    require(stage_widths[i] > 0 && convs_per_stage[i] > 0, ErrorKind::Config,
            "loss network stage widths and conv counts must be positive");
  }
  const auto& t = tap_stages;
  const bool chain = t[0] >= 1 && t[2] <= 5 && t[1] == t[0] + 1 && t[2] == t[1] + 1;
  require(chain, ErrorKind::Config,
          "loss network tap stages must be three consecutive pooling stages within 1..5, got " +
              std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]));
  for (float s : input_std) require(s > 0.f, ErrorKind::Config, "loss network input_std must be positive");
}

VggTrunkImpl::VggTrunkImpl(const LossNetworkConfig& cfg) {
  int64_t in = 3;
  for (size_t s = 0; s < 5; ++s) {
    nn::Sequential stage;
    for (int64_t k = 0; k < cfg.convs_per_stage[s]; ++k) {
      stage->push_back(nn::Conv2d(nn::Conv2dOptions(in, cfg.stage_widths[s], 3).padding(1)));
      stage->push_back(nn::ReLU());
      in = cfg.stage_widths[s];
    }
    stage->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
  }
}

std::vector<torch::Tensor> VggTrunkImpl::forward_stages(const torch::Tensor& x, int64_t last_stage) {
  std::vector<torch::Tensor> outs;
  torch::Tensor h = x;
  for (int64_t s = 0; s < last_stage; ++s) {
    h = stages_[static_cast<size_t>(s)]->forward(h);
    outs.push_back(h);
  }
  return outs;
}

LossNetwork::LossNetwork(LossNetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  trunk_ = VggTrunk(cfg_);
  seeded_init(*trunk_, cfg_.seed, InitScheme::KaimingNormal);
}

void LossNetwork::freeze() {
  trunk_->eval();
  for (auto& p : trunk_->parameters()) p.set_requires_grad(false);
}

void LossNetwork::check_resolution(int64_t resolution) const {
  const int64_t deepest = int64_t{1} << cfg_.tap_stages[2];
  const bool ok = is_power_of_two(resolution) && resolution % deepest == 0 &&
                  (resolution >> cfg_.tap_stages[0]) >= 8;
  require(ok, ErrorKind::Config,
          "resolution " + std::to_string(resolution) + " unsupported by the loss network: need a power of two divisible by " +
              std::to_string(deepest) + " with tap1 >= 8 px");
}

std::array<int64_t, 3> LossNetwork::tap_sizes(int64_t resolution) const {
  check_resolution(resolution);
  return {resolution >> cfg_.tap_stages[0], resolution >> cfg_.tap_stages[1], resolution >> cfg_.tap_stages[2]};
}

std::array<int64_t, 3> LossNetwork::tap_channels() const {
  return {cfg_.stage_widths[static_cast<size_t>(cfg_.tap_stages[0] - 1)],
          cfg_.stage_widths[static_cast<size_t>(cfg_.tap_stages[1] - 1)],
          cfg_.stage_widths[static_cast<size_t>(cfg_.tap_stages[2] - 1)]};
}

namespace {

torch::Tensor normalise_input(const torch::Tensor& x, const LossNetworkConfig& cfg) {
  const bool identity = cfg.input_mean == std::array<float, 3>{0.f, 0.f, 0.f} &&
                        cfg.input_std == std::array<float, 3>{1.f, 1.f, 1.f};
  if (identity) return x;
  auto opts = x.options().requires_grad(false);
  auto mean = torch::tensor({cfg.input_mean[0], cfg.input_mean[1], cfg.input_mean[2]}, opts).view({1, 3, 1, 1});
  auto std = torch::tensor({cfg.input_std[0], cfg.input_std[1], cfg.input_std[2]}, opts).view({1, 3, 1, 1});
  return (x - mean) / std;
}

}  // namespace

FeatureTaps LossNetwork::extract_taps(const torch::Tensor& x) const {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Dimension, "loss network expects [B, 3, H, W]");
  require(x.size(2) == x.size(3), ErrorKind::Dimension, "loss network expects square images");
  check_resolution(x.size(2));
  auto stages = trunk_->forward_stages(normalise_input(x, cfg_), cfg_.tap_stages[2]);
  const auto pick = [&](size_t i) { return stages[static_cast<size_t>(cfg_.tap_stages[i] - 1)]; };
  return {pick(0), pick(1), pick(2)};
}

torch::Tensor LossNetwork::embedding(const torch::Tensor& x) const {
  auto pooled = extract_taps(x).tap3.mean({2, 3});
  return torch::nn::functional::normalize(pooled, torch::nn::functional::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
}

uint64_t LossNetwork::checksum() const { return module_checksum(*trunk_); }

int64_t LossNetwork::parameter_count() const { return s2p::parameter_count(*trunk_); }

LossNetwork LossNetwork::to(torch::Dtype dtype) const {
  LossNetwork copy(cfg_);
  weights_to_module(module_to_weights(*trunk_, "phi"), *copy.trunk_);
  copy.trunk_->to(dtype);
  copy.training_accuracy_ = training_accuracy_;
  copy.freeze();
  return copy;
}

void LossNetwork::save(const std::string& path) const {
  nlohmann::json meta = {{"provider", to_string(cfg_.provider)},
                         {"stage_widths", cfg_.stage_widths},
                         {"convs_per_stage", cfg_.convs_per_stage},
                         {"tap_stages", cfg_.tap_stages}};
  if (training_accuracy_) meta["training_accuracy"] = *training_accuracy_;
  write_weight_file(path, module_to_weights(*trunk_, "phi", meta.dump()));
}

namespace {

/// Cosine-softmax head so that the frozen trunk's pooled tap3 is directly
/// usable as a cosine-similarity embedding.
struct CosineHeadImpl : nn::Module {
  CosineHeadImpl(int64_t dim, int64_t classes) {
    weight = register_parameter("weight", torch::randn({classes, dim}) * 0.1);
  }
  torch::Tensor forward(const torch::Tensor& features) {
    namespace F = torch::nn::functional;
    auto f = F::normalize(features, F::NormalizeFuncOptions().dim(1));
    auto w = F::normalize(weight, F::NormalizeFuncOptions().dim(1));
    return 16.0 * f.matmul(w.t());
  }
  torch::Tensor weight;
};
TORCH_MODULE(CosineHead);

double classify_accuracy(LossNetwork& net, CosineHead& head, const torch::Tensor& images, const torch::Tensor& labels) {
  torch::NoGradGuard no_grad;
  int64_t correct = 0;
  for (int64_t i = 0; i < images.size(0); i += 64) {
    const int64_t end = std::min(images.size(0), i + 64);
    auto feats = net.extract_taps(images.slice(0, i, end)).tap3.mean({2, 3});
    auto pred = head->forward(feats).argmax(1);
    correct += pred.eq(labels.slice(0, i, end)).sum().item<int64_t>();
  }
  return images.size(0) == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(images.size(0));
}

void train_identity_classifier(LossNetwork& net, const IdentityTrainingSet& data, uint64_t seed,
                               std::optional<double>& accuracy) {
  require(data.num_classes >= 2 && data.train_images.defined() && data.train_images.size(0) > 0, ErrorKind::Config,
          "synthetic-trained loss network needs a labelled identity set");
  require(data.held_out_images.defined() && data.held_out_images.size(0) > 0, ErrorKind::Config,
          "synthetic-trained loss network needs held-out renders");
  torch::AutoGradMode grad_on(true);
  torch::manual_seed(seed);
  CosineHead head(net.tap_channels()[2], data.num_classes);
  std::vector<torch::Tensor> params = net.module().parameters();
  for (auto& p : head->parameters()) params.push_back(p);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(data.learning_rate));
  std::mt19937_64 rng(seed);
  std::vector<int64_t> order(static_cast<size_t>(data.train_images.size(0)));
  std::iota(order.begin(), order.end(), 0);
  net.module().train();
  for (int64_t epoch = 0; epoch < data.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(data.batch_size)) {
      const size_t end = std::min(order.size(), i + static_cast<size_t>(data.batch_size));
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + static_cast<std::ptrdiff_t>(i),
                                                    order.begin() + static_cast<std::ptrdiff_t>(end)));
      auto feats = net.extract_taps(data.train_images.index_select(0, idx)).tap3.mean({2, 3});
      auto loss = torch::nn::functional::cross_entropy(head->forward(feats), data.train_labels.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  accuracy = classify_accuracy(net, head, data.held_out_images, data.held_out_labels);
  if (*accuracy <= data.min_accuracy) {
    fail(ErrorKind::Config, "synthetic-trained loss network reached only " + std::to_string(*accuracy * 100.0) +
                                "% held-out accuracy (gate " + std::to_string(data.min_accuracy * 100.0) + "%)");
  }
}

}  // namespace

LossNetwork build_loss_network(const LossNetworkConfig& cfg, const IdentityTrainingSet* data) {
  LossNetwork net(cfg);
  switch (cfg.provider) {
    case LossNetworkProvider::FixedRandom:
      break;
    case LossNetworkProvider::ImportedWeights: {
      require(!cfg.weights_path.empty(), ErrorKind::Load, "imported-weights loss network needs a weight file");
      weights_to_module(read_weight_file(cfg.weights_path), *net.trunk_);
      break;
    }
    case LossNetworkProvider::SyntheticTrained:
      require(data != nullptr, ErrorKind::Config, "synthetic-trained loss network needs an identity dataset");
      train_identity_classifier(net, *data, cfg.seed, net.training_accuracy_);
      break;
  }
  net.freeze();
  return net;
}

}  // namespace s2p
