#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace s2p {

enum class InitScheme {
  Normal002,      // N(0, 0.02), zero bias: the adversarial-translation convention
  KaimingNormal,  // N(0, sqrt(2 / fan_in)), zero bias
};

/// Re-initialises every conv / linear weight of `module` from a private
/// generator seeded with `seed`; the global torch RNG is left untouched.
void seeded_init(torch::nn::Module& module, uint64_t seed, InitScheme scheme);

}  // namespace s2p
