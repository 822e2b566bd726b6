#include "s2p/networks.hpp"

#include "s2p/error.hpp"
#include "s2p/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace nn = torch::nn;

namespace s2p {

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(true));
}

nn::InstanceNorm2d instance_norm(int64_t channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

std::string spatial(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

}  // namespace

bool is_power_of_two(int64_t v) { return v > 0 && std::has_single_bit(static_cast<uint64_t>(v)); }

void check_halving_chain(const FeatureTaps& taps) {
  const std::array<const torch::Tensor*, 3> t{&taps.tap1, &taps.tap2, &taps.tap3};
  for (const auto* x : t) {
    require(x->defined() && x->dim() == 4, ErrorKind::Dimension, "feature taps must be [B, C, H, W]");
  }
  for (int i = 1; i < 3; ++i) {
    const auto& prev = *t[i - 1];
    const auto& cur = *t[i];
    const bool ok = cur.size(0) == prev.size(0) && prev.size(2) % 2 == 0 && prev.size(3) % 2 == 0 &&
                    cur.size(2) * 2 == prev.size(2) && cur.size(3) * 2 == prev.size(3);
    if (!ok) {
      fail(ErrorKind::Dimension, "feature taps break the halving chain: tap" + std::to_string(i) + " " +
                                     spatial(prev) + " -> tap" + std::to_string(i + 1) + " " + spatial(cur));
    }
  }
}

// -- generator ---------------------------------------------------------------

int64_t GeneratorSpec::resolved_blocks() const {
  if (residual_blocks > 0) return residual_blocks;
  return resolution >= 256 ? 9 : 6;
}

void GeneratorSpec::validate() const {
  require(is_power_of_two(resolution) && resolution >= 32, ErrorKind::Config,
          "generator resolution must be a power of two >= 32, got " + std::to_string(resolution));
  require(base_width > 0, ErrorKind::Config, "generator base_width must be positive");
  require(residual_blocks >= 0, ErrorKind::Config, "residual_blocks must be non-negative");
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  body_ = nn::Sequential(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({1, 1, 1, 1})), conv(channels, channels, 3, 1, 0),
                         instance_norm(channels), nn::ReLU(),
                         nn::ReflectionPad2d(nn::ReflectionPad2dOptions({1, 1, 1, 1})), conv(channels, channels, 3, 1, 0),
                         instance_norm(channels));
  register_module("body", body_);
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  const int64_t w = spec_.base_width;
  model_ = nn::Sequential(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({3, 3, 3, 3})), conv(3, w, 7, 1, 0),
                          instance_norm(w), nn::ReLU());
  int64_t ch = w;
  for (int i = 0; i < 2; ++i) {
    model_->push_back(conv(ch, ch * 2, 3, 2, 1));
    model_->push_back(instance_norm(ch * 2));
    model_->push_back(nn::ReLU());
    ch *= 2;
  }
  for (int64_t i = 0; i < spec_.resolved_blocks(); ++i) model_->push_back(ResidualBlock(ch));
  for (int i = 0; i < 2; ++i) {
    model_->push_back(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch, ch / 2, 3).stride(2).padding(1).output_padding(1)));
    model_->push_back(instance_norm(ch / 2));
    model_->push_back(nn::ReLU());
    ch /= 2;
  }
  model_->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({3, 3, 3, 3})));
  model_->push_back(conv(ch, 3, 7, 1, 0));
  model_->push_back(nn::Tanh());
  register_module("model", model_);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Dimension, "generator expects [B, 3, H, W], got " + spatial(x));
  if (x.size(2) != spec_.resolution || x.size(3) != spec_.resolution) {
    fail(ErrorKind::Dimension, "generator trained at " + std::to_string(spec_.resolution) + "px, got " + spatial(x));
  }
  return model_->forward(x);
}

// -- patch discriminator -----------------------------------------------------

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const PatchDiscriminatorSpec& spec) {
  require(spec.base_width > 0, ErrorKind::Config, "patch discriminator base_width must be positive");
  const int64_t w = spec.base_width;
  model_ = nn::Sequential(conv(3, w, 4, 2, 1), leaky(),                                  //
                          conv(w, w * 2, 4, 2, 1), instance_norm(w * 2), leaky(),        //
                          conv(w * 2, w * 4, 4, 2, 1), instance_norm(w * 4), leaky(),    //
                          conv(w * 4, w * 8, 4, 1, 1), instance_norm(w * 8), leaky(),    //
                          conv(w * 8, 1, 4, 1, 1), nn::Sigmoid());
  register_module("model", model_);
}

int64_t PatchDiscriminatorImpl::output_size(int64_t input_size) {
  int64_t s = input_size;
  for (int i = 0; i < 3; ++i) s = (s + 2 - 4) / 2 + 1;
  for (int i = 0; i < 2; ++i) s = s + 2 - 4 + 1;
  return s;
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Dimension,
          "patch discriminator expects [B, 3, H, W], got " + spatial(x));
  require(output_size(x.size(2)) >= 1 && output_size(x.size(3)) >= 1, ErrorKind::Dimension,
          "patch discriminator input too small: " + spatial(x));
  return model_->forward(x);
}

// -- geometry discriminator --------------------------------------------------

int64_t geometry_layer_count(int64_t tap1_size) {
  require(is_power_of_two(tap1_size) && tap1_size >= 8, ErrorKind::Config,
          "geometry discriminator needs a power-of-two tap1 of at least 8, got " + std::to_string(tap1_size));
  return std::countr_zero(static_cast<uint64_t>(tap1_size));
}

GeometryDiscriminatorImpl::GeometryDiscriminatorImpl(const GeometryDiscriminatorSpec& spec,
                                                     std::array<int64_t, 3> tap_channels, int64_t tap1_size)
    : tap_channels_(tap_channels), tap1_size_(tap1_size) {
  require(!spec.conv_widths.empty(), ErrorKind::Config, "geometry discriminator needs at least one width");
  for (auto w : spec.conv_widths) require(w > 0, ErrorKind::Config, "geometry discriminator widths must be positive");
  for (auto c : tap_channels) require(c > 0, ErrorKind::Config, "tap channel counts must be positive");
  const int64_t n = geometry_layer_count(tap1_size);
  const auto width = [&](int64_t i) {
    return spec.conv_widths[static_cast<size_t>(std::min<int64_t>(i, std::ssize(spec.conv_widths) - 1))];
  };
  int64_t in = tap_channels_[0];
  for (int64_t i = 0; i < n; ++i) {
    const bool last = i == n - 1;
    const int64_t out = last ? 1 : width(i);
    convs_.push_back(register_module("conv" + std::to_string(i + 1), conv(in, out, 4, 2, 1)));
    const bool middle = i > 0 && !last;
    if (middle && spec.instance_norm) {
      norms_.push_back(register_module("norm" + std::to_string(i + 1), instance_norm(out)));
    } else {
      norms_.emplace_back(nullptr);
    }
    in = out;
    if (i == 0) in += tap_channels_[1];
    if (i == 1) in += tap_channels_[2];
  }
}

int64_t GeometryDiscriminatorImpl::input_channels(int64_t i) const {
  return convs_.at(static_cast<size_t>(i))->options.in_channels();
}

int64_t GeometryDiscriminatorImpl::output_channels(int64_t i) const {
  return convs_.at(static_cast<size_t>(i))->options.out_channels();
}

std::vector<int64_t> GeometryDiscriminatorImpl::strides() const {
  std::vector<int64_t> out;
  for (const auto& c : convs_) {
    const auto& s = c->options.stride();
    out.push_back((*s)[0] == (*s)[1] ? (*s)[0] : -1);
  }
  return out;
}

torch::Tensor GeometryDiscriminatorImpl::forward(const FeatureTaps& taps) {
  check_halving_chain(taps);
  if (taps.tap1.size(2) != tap1_size_ || taps.tap1.size(3) != tap1_size_) {
    fail(ErrorKind::Dimension, "geometry discriminator built for tap1 of " + std::to_string(tap1_size_) +
                                   "px, got " + spatial(taps.tap1));
  }
  const std::array<const torch::Tensor*, 3> t{&taps.tap1, &taps.tap2, &taps.tap3};
  for (int i = 0; i < 3; ++i) {
    if (t[i]->size(1) != tap_channels_[i]) {
      fail(ErrorKind::Config, "tap" + std::to_string(i + 1) + " has " + std::to_string(t[i]->size(1)) +
                                  " channels, geometry discriminator expects " + std::to_string(tap_channels_[i]));
    }
  }
  torch::Tensor h = taps.tap1;
  const size_t n = convs_.size();
  for (size_t i = 0; i < n; ++i) {
    h = convs_[i]->forward(h);
    if (i + 1 == n) break;
    if (!norms_[i].is_empty()) h = norms_[i]->forward(h);
    h = torch::leaky_relu(h, 0.2);
    if (i == 0) h = torch::cat({h, taps.tap2}, 1);
    if (i == 1) h = torch::cat({h, taps.tap3}, 1);
  }
  return torch::sigmoid(h).flatten();
}

// -- utilities ---------------------------------------------------------------

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

uint64_t module_checksum(const torch::nn::Module& module) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    h = fnv1a(c.data_ptr(), static_cast<size_t>(c.numel()) * c.element_size(), h);
  };
  for (const auto& p : module.named_parameters(true)) mix(p.value());
  for (const auto& b : module.named_buffers(true)) mix(b.value());
  return h;
}

}  // namespace s2p
