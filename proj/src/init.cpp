#include "s2p/init.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

namespace s2p {

void seeded_init(torch::nn::Module& module, uint64_t seed, InitScheme scheme) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& p : module.named_parameters(true)) {
    auto& t = p.value();
    const std::string& name = p.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias || t.dim() < 2) {
      t.zero_();
      continue;
    }
    double stddev = 0.02;
    if (scheme == InitScheme::KaimingNormal) {
      const double fan_in = static_cast<double>(t.numel() / t.size(0));
      stddev = std::sqrt(2.0 / fan_in);
    }
    t.normal_(0.0, stddev, gen);
  }
}

}  // namespace s2p
