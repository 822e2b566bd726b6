#include "s2p/inspect.hpp"

#include "s2p/error.hpp"
#include "s2p/loss_network.hpp"
#include "s2p/networks.hpp"

#include <sstream>

namespace s2p {

ArchitectureTrace trace_architecture(const RunConfig& cfg) {
  cfg.validate();
  ArchitectureTrace t;
  t.resolution = cfg.data.resolution;
  t.fingerprint = cfg.architecture_fingerprint();

  // Shapes only, so a random trunk of the configured widths suffices.
  LossNetworkConfig phi_cfg = cfg.model.phi;
  phi_cfg.provider = LossNetworkProvider::FixedRandom;
  const LossNetwork phi = build_loss_network(phi_cfg);
  phi.check_resolution(t.resolution);
  t.tap_sizes = phi.tap_sizes(t.resolution);
  t.tap_channels = phi.tap_channels();
  t.loss_network_parameters = phi.parameter_count();

  const GeometryDiscriminator dg(cfg.geometry_spec(), t.tap_channels, t.tap_sizes[0]);
  int64_t size = t.tap_sizes[0];
  const auto strides = dg->strides();
  for (int64_t i = 0; i < dg->layer_count(); ++i) {
    GeometryLayerTrace l;
    l.tap_channels_in = i == 1 ? t.tap_channels[1] : i == 2 ? t.tap_channels[2] : 0;
    l.conv_channels_in = dg->input_channels(i) - l.tap_channels_in;
    l.channels_out = dg->output_channels(i);
    l.stride = strides[static_cast<size_t>(i)];
    l.size_in = size;
    size /= l.stride;
    l.size_out = size;
    t.geometry_layers.push_back(l);
  }
  t.geometry_parameters = parameter_count(*dg);

  const GeneratorSpec gspec = cfg.generator_spec();
  t.residual_blocks = gspec.resolved_blocks();
  t.generator_parameters = parameter_count(*Generator(gspec));
  t.patch_parameters = parameter_count(*PatchDiscriminator(cfg.patch_spec()));
  t.patch_output_size = PatchDiscriminatorImpl::output_size(t.resolution);
  return t;
}

std::string render_trace(const ArchitectureTrace& t) {
  std::ostringstream os;
  os << "resolution: " << t.resolution << "x" << t.resolution << "\n";
  os << "architecture fingerprint: " << t.fingerprint << "\n";
  os << "loss network taps:";
  for (size_t i = 0; i < 3; ++i) {
    os << (i ? ", " : " ") << "tap" << i + 1 << " " << t.tap_sizes[i] << "x" << t.tap_sizes[i] << "x"
       << t.tap_channels[i];
  }
  os << "\n";
  os << "geometry discriminator: " << t.geometry_layers.size() << " convolutions, all stride 2\n";
  for (size_t i = 0; i < t.geometry_layers.size(); ++i) {
    const auto& l = t.geometry_layers[i];
    os << "  conv" << i + 1 << ": ";
    if (l.tap_channels_in > 0) {
      os << l.conv_channels_in << " + " << l.tap_channels_in << " (tap" << (i == 1 ? 2 : 3)
         << ") = " << l.conv_channels_in + l.tap_channels_in;
    } else {
      os << l.conv_channels_in;
    }
    os << " -> " << l.channels_out << " channels, " << l.size_in << "x" << l.size_in << " -> " << l.size_out << "x"
       << l.size_out << "\n";
  }
  os << "parameters:\n";
  os << "  generator (x2): " << t.generator_parameters << " (" << t.residual_blocks << " residual blocks)\n";
  os << "  patch discriminator (x2): " << t.patch_parameters << " (" << t.patch_output_size << "x"
     << t.patch_output_size << " output)\n";
  os << "  geometry discriminator (x2): " << t.geometry_parameters << "\n";
  os << "  loss network (frozen): " << t.loss_network_parameters << "\n";
  return os.str();
}

}  // namespace s2p
