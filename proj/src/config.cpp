#include "s2p/config.hpp"

#include "s2p/error.hpp"
#include "s2p/weights_io.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace s2p {

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Full: return "full";
    case TrainMode::NoGeometry: return "no_geometry";
    case TrainMode::CycleGanBaseline: return "cyclegan_baseline";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "full") return TrainMode::Full;
  if (s == "no_geometry") return TrainMode::NoGeometry;
  if (s == "cyclegan_baseline") return TrainMode::CycleGanBaseline;
  fail(ErrorKind::Usage, "unknown mode '" + s + "' (expected full, no_geometry or cyclegan_baseline)");
}

int64_t TrainConfig::resolved_checkpoint_every() const {
  if (checkpoint_every > 0) return checkpoint_every;
  return std::max<int64_t>(1, epochs / 10);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  // Plain decimals read better in config files; fall back to the shortest
  // form for very small or large magnitudes.
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  if (ec != std::errc{} || end - buf > 12) end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string literal(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(static_cast<double>(v));
  } else if constexpr (std::is_same_v<T, std::string>) {
    return quote(v);
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else {
    std::string out = "[";
    bool first = true;
    for (const auto& x : v) {
      if (!first) out += ", ";
      out += literal(x);
      first = false;
    }
    return out + "]";
  }
}

template <class T>
T convert(const YAML::Node& node) {
  if constexpr (std::is_same_v<T, std::string> || std::is_arithmetic_v<T>) {
    return node.as<T>();
  } else {
    using E = typename T::value_type;
    if (!node.IsSequence()) throw YAML::BadConversion(node.Mark());
    T out{};
    if constexpr (requires(T t) { t.push_back(E{}); }) {
      for (const auto& item : node) out.push_back(item.as<E>());
    } else {
      if (node.size() != out.size()) throw YAML::BadConversion(node.Mark());
      for (size_t i = 0; i < out.size(); ++i) out[i] = node[i].as<E>();
    }
    return out;
  }
}

struct Field {
  std::string name;  // section.key
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const YAML::Node&)> set;
};

template <class T, class Access>
Field field(std::string name, Access access) {
  return {name, [access](const RunConfig& c) { return literal(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const YAML::Node& n) { access(c) = convert<T>(n); }};
}

template <class E, class Access>
Field enum_field(std::string name, Access access, const char* (*print)(E), E (*parse)(const std::string&)) {
  return {name, [access, print](const RunConfig& c) { return quote(print(access(const_cast<RunConfig&>(c)))); },
          [access, parse](RunConfig& c, const YAML::Node& n) { access(c) = parse(n.as<std::string>()); }};
}

const char* provider_name(LossNetworkProvider p) { return to_string(p); }
const char* mode_name(TrainMode m) { return to_string(m); }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(field<std::string>("data.manifest", [](RunConfig& c) -> auto& { return c.data.manifest; }));
    f.push_back(field<int64_t>("data.resolution", [](RunConfig& c) -> auto& { return c.data.resolution; }));
    f.push_back(field<bool>("data.flip", [](RunConfig& c) -> auto& { return c.data.flip; }));
    f.push_back(field<int>("data.workers", [](RunConfig& c) -> auto& { return c.data.workers; }));

    f.push_back(field<int64_t>("model.generator_width", [](RunConfig& c) -> auto& { return c.model.generator_width; }));
    f.push_back(field<int64_t>("model.residual_blocks", [](RunConfig& c) -> auto& { return c.model.residual_blocks; }));
    f.push_back(field<int64_t>("model.patch_width", [](RunConfig& c) -> auto& { return c.model.patch_width; }));
    f.push_back(field<std::vector<int64_t>>("model.geometry_widths",
                                            [](RunConfig& c) -> auto& { return c.model.geometry_widths; }));
    f.push_back(field<bool>("model.geometry_instance_norm",
                            [](RunConfig& c) -> auto& { return c.model.geometry_instance_norm; }));
    f.push_back(enum_field("model.phi_provider", [](RunConfig& c) -> auto& { return c.model.phi.provider; },
                           provider_name, parse_loss_network_provider));
    f.push_back(field<std::array<int64_t, 5>>("model.phi_stage_widths",
                                              [](RunConfig& c) -> auto& { return c.model.phi.stage_widths; }));
    f.push_back(field<std::array<int64_t, 5>>("model.phi_convs_per_stage",
                                              [](RunConfig& c) -> auto& { return c.model.phi.convs_per_stage; }));
    f.push_back(field<std::array<int64_t, 3>>("model.phi_tap_stages",
                                              [](RunConfig& c) -> auto& { return c.model.phi.tap_stages; }));
    f.push_back(field<uint64_t>("model.phi_seed", [](RunConfig& c) -> auto& { return c.model.phi.seed; }));
    f.push_back(field<std::string>("model.phi_weights", [](RunConfig& c) -> auto& { return c.model.phi.weights_path; }));
    f.push_back(field<std::array<float, 3>>("model.phi_input_mean",
                                            [](RunConfig& c) -> auto& { return c.model.phi.input_mean; }));
    f.push_back(field<std::array<float, 3>>("model.phi_input_std",
                                            [](RunConfig& c) -> auto& { return c.model.phi.input_std; }));
    f.push_back(field<int64_t>("model.phi_identities",
                               [](RunConfig& c) -> auto& { return c.model.phi_identities.n_identities; }));
    f.push_back(field<int>("model.phi_train_renders",
                           [](RunConfig& c) -> auto& { return c.model.phi_identities.train_renders; }));
    f.push_back(field<int>("model.phi_held_out_renders",
                           [](RunConfig& c) -> auto& { return c.model.phi_identities.held_out_renders; }));
    f.push_back(field<uint64_t>("model.phi_identity_seed",
                                [](RunConfig& c) -> auto& { return c.model.phi_identities.seed; }));
    f.push_back(field<int64_t>("model.phi_epochs", [](RunConfig& c) -> auto& { return c.model.phi_epochs; }));

    f.push_back(field<int64_t>("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }));
    f.push_back(field<double>("train.learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    f.push_back(field<double>("train.beta1", [](RunConfig& c) -> auto& { return c.train.beta1; }));
    f.push_back(field<double>("train.beta2", [](RunConfig& c) -> auto& { return c.train.beta2; }));
    f.push_back(enum_field("train.mode", [](RunConfig& c) -> auto& { return c.train.mode; }, mode_name,
                           parse_train_mode));
    f.push_back(field<double>("train.lambda_cyc", [](RunConfig& c) -> auto& { return c.train.weights.lambda_cyc; }));
    f.push_back(field<double>("train.lambda_geo", [](RunConfig& c) -> auto& { return c.train.weights.lambda_geo; }));
    f.push_back(
        field<double>("train.lambda_patch", [](RunConfig& c) -> auto& { return c.train.weights.lambda_patch; }));
    f.push_back(field<uint64_t>("train.seed", [](RunConfig& c) -> auto& { return c.train.seed; }));
    f.push_back(field<int64_t>("train.pool_size", [](RunConfig& c) -> auto& { return c.train.pool_size; }));
    f.push_back(field<int64_t>("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    f.push_back(field<bool>("train.linear_decay", [](RunConfig& c) -> auto& { return c.train.linear_decay; }));
    f.push_back(
        field<int64_t>("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));

    f.push_back(field<int64_t>("eval.repeats", [](RunConfig& c) -> auto& { return c.eval.repeats; }));
    f.push_back(field<bool>("eval.retrain", [](RunConfig& c) -> auto& { return c.eval.retrain; }));
    f.push_back(field<uint64_t>("eval.seed", [](RunConfig& c) -> auto& { return c.eval.seed; }));
    f.push_back(field<int64_t>("eval.realism_steps", [](RunConfig& c) -> auto& { return c.eval.realism_steps; }));
    return f;
  }();
  return all;
}

const Field& find_field(const std::string& name) {
  for (const auto& f : fields()) {
    if (f.name == name) return f;
  }
  fail(ErrorKind::Usage, "unknown config key '" + name + "'");
}

void set_from_node(RunConfig& cfg, const std::string& name, const YAML::Node& node) {
  const Field& f = find_field(name);
  try {
    f.set(cfg, node);
  } catch (const YAML::Exception&) {
    fail(ErrorKind::Usage, "invalid value for config key '" + name + "'");
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  return out;
}

void apply_config_yaml(RunConfig& cfg, const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(ErrorKind::Usage, std::string("config is not valid YAML: ") + e.what());
  }
  if (root.IsNull()) return;
  require(root.IsMap(), ErrorKind::Usage, "config must be a mapping of sections");
  for (const auto& section : root) {
    const auto sec = section.first.as<std::string>();
    if (sec != "data" && sec != "model" && sec != "train" && sec != "eval") {
      fail(ErrorKind::Usage, "unknown config key '" + sec + "'");
    }
    if (section.second.IsNull()) continue;
    require(section.second.IsMap(), ErrorKind::Usage, "config section '" + sec + "' must be a mapping");
    for (const auto& kv : section.second) set_from_node(cfg, sec + "." + kv.first.as<std::string>(), kv.second);
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_yaml(cfg, ss.str());
}

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  YAML::Node node;
  try {
    node = YAML::Load(value);
  } catch (const YAML::Exception&) {
    fail(ErrorKind::Usage, "invalid value for config key '" + dotted_key + "'");
  }
  set_from_node(cfg, dotted_key, node);
}

std::string get_config_value(const RunConfig& cfg, const std::string& dotted_key) {
  return find_field(dotted_key).get(cfg);
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.name.find('.');
    const std::string sec = f.name.substr(0, dot);
    if (sec != section) {
      os << sec << ":\n";
      section = sec;
    }
    os << "  " << f.name.substr(dot + 1) << ": " << f.get(cfg) << "\n";
  }
  return os.str();
}

GeneratorSpec RunConfig::generator_spec() const {
  return {data.resolution, model.generator_width, model.residual_blocks};
}

PatchDiscriminatorSpec RunConfig::patch_spec() const { return {model.patch_width}; }

GeometryDiscriminatorSpec RunConfig::geometry_spec() const {
  return {model.geometry_widths, model.geometry_instance_norm};
}

void RunConfig::validate() const {
  require(is_power_of_two(data.resolution) && data.resolution >= 32, ErrorKind::Config,
          "resolution must be a power of two >= 32, got " + std::to_string(data.resolution));
  require(data.resolution % 32 == 0, ErrorKind::Config, "resolution must be divisible by 32");
  model.phi.validate();
  require((data.resolution >> model.phi.tap_stages[0]) >= 8, ErrorKind::Config,
          "resolution " + std::to_string(data.resolution) + " leaves a tap1 smaller than 8x8");
  require(data.workers >= 1, ErrorKind::Usage, "data.workers must be >= 1");
  generator_spec().validate();
  require(model.patch_width > 0, ErrorKind::Usage, "model.patch_width must be positive");
  require(!model.geometry_widths.empty(), ErrorKind::Usage, "model.geometry_widths must not be empty");
  for (auto w : model.geometry_widths) require(w > 0, ErrorKind::Usage, "model.geometry_widths must be positive");
  require(model.phi_epochs >= 1, ErrorKind::Usage, "model.phi_epochs must be >= 1");
  require(train.epochs >= 1, ErrorKind::Usage, "train.epochs must be >= 1");
  require(train.learning_rate > 0.0, ErrorKind::Usage, "train.learning_rate must be positive");
  require(train.beta1 >= 0.0 && train.beta1 < 1.0 && train.beta2 >= 0.0 && train.beta2 < 1.0, ErrorKind::Usage,
          "train.beta1 / train.beta2 must lie in [0, 1)");
  train.weights.validate(true);
  require(train.pool_size >= 0, ErrorKind::Usage, "train.pool_size must be >= 0");
  require(train.batch_size >= 1, ErrorKind::Usage, "train.batch_size must be >= 1");
  require(train.checkpoint_every >= 0, ErrorKind::Usage, "train.checkpoint_every must be >= 0");
  require(eval.repeats >= 1, ErrorKind::Usage, "eval.repeats must be >= 1");
  require(eval.realism_steps >= 1, ErrorKind::Usage, "eval.realism_steps must be >= 1");
}

std::string RunConfig::architecture_fingerprint() const {
  std::ostringstream os;
  os << "res=" << data.resolution << ";g=" << model.generator_width << "x" << generator_spec().resolved_blocks()
     << ";d=" << model.patch_width << ";dg=" << literal(model.geometry_widths) << model.geometry_instance_norm
     << ";phi=" << literal(model.phi.stage_widths) << literal(model.phi.convs_per_stage)
     << literal(model.phi.tap_stages) << literal(model.phi.input_mean) << literal(model.phi.input_std);
  const std::string canon = os.str();
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canon.data(), canon.size());
  return hex.str();
}

}  // namespace s2p
