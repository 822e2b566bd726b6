#include "s2p/training.hpp"

#include "s2p/error.hpp"
#include "s2p/init.hpp"
#include "s2p/log.hpp"
#include "s2p/synthetic.hpp"
#include "s2p/weights_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace s2p {

namespace {

constexpr int kCheckpointFormat = 1;

double value(const torch::Tensor& t) { return t.item<double>(); }

ObjectiveTerms<double> to_values(const ObjectiveTerms<torch::Tensor>& t) {
  return {value(t.adv_patch_x), value(t.adv_patch_y), value(t.adv_geo_x),
          value(t.adv_geo_y),   value(t.cyc_x),       value(t.cyc_y)};
}

/// Disables gradients of a set of modules for its lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<torch::nn::Module*> modules) : modules_(std::move(modules)) {
    for (auto* m : modules_) {
      for (auto& p : m->parameters()) p.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (auto* m : modules_) {
      for (auto& p : m->parameters()) p.set_requires_grad(true);
    }
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::nn::Module*> modules_;
};

std::vector<torch::Tensor> params_of(std::initializer_list<torch::nn::Module*> modules) {
  std::vector<torch::Tensor> out;
  for (auto* m : modules) {
    for (auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) fail(ErrorKind::Divergence, std::string("non-finite loss term ") + name);
}

std::string epoch_dir_name(int64_t epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return os.str();
}

}  // namespace

// -- bundle ------------------------------------------------------------------

std::vector<std::pair<std::string, torch::nn::Module*>> ModelBundle::trainable() {
  return {{"G_x", g_x.ptr().get()},   {"G_y", g_y.ptr().get()},   {"D_x", d_x.ptr().get()},
          {"D_y", d_y.ptr().get()},   {"Dg_x", dg_x.ptr().get()}, {"Dg_y", dg_y.ptr().get()}};
}

LossNetwork prepare_loss_network(const RunConfig& cfg) {
  if (cfg.model.phi.provider != LossNetworkProvider::SyntheticTrained) return build_loss_network(cfg.model.phi);
  IdentitySetOptions opts = cfg.model.phi_identities;
  opts.resolution = cfg.data.resolution;
  log_info("training synthetic loss network on " + std::to_string(opts.n_identities) + " identities");
  IdentityTrainingSet set = make_identity_training_set(opts);
  set.epochs = cfg.model.phi_epochs;
  LossNetwork phi = build_loss_network(cfg.model.phi, &set);
  if (phi.training_accuracy()) {
    log_info("loss network held-out accuracy " + std::to_string(*phi.training_accuracy() * 100.0) + "%");
  }
  return phi;
}

ModelBundle make_bundle(const RunConfig& cfg, LossNetwork phi, uint64_t seed) {
  const auto sizes = phi.tap_sizes(cfg.data.resolution);
  const auto channels = phi.tap_channels();
  ModelBundle b(std::move(phi));
  b.g_x = Generator(cfg.generator_spec());
  b.g_y = Generator(cfg.generator_spec());
  b.d_x = PatchDiscriminator(cfg.patch_spec());
  b.d_y = PatchDiscriminator(cfg.patch_spec());
  b.dg_x = GeometryDiscriminator(cfg.geometry_spec(), channels, sizes[0]);
  b.dg_y = GeometryDiscriminator(cfg.geometry_spec(), channels, sizes[0]);
  uint64_t salt = 1;
  for (auto& [name, module] : b.trainable()) seeded_init(*module, mix_seed(seed, salt++), InitScheme::Normal002);
  return b;
}

// -- history pool ------------------------------------------------------------

torch::Tensor HistoryPool::query(const torch::Tensor& batch, Rng& rng) {
  if (capacity_ == 0) return batch;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < batch.size(0); ++i) {
    auto image = batch[i].detach().clone();
    if (size() < capacity_) {
      images_.push_back(image);
      out.push_back(image);
    } else if (rng.coin()) {
      const auto idx = static_cast<size_t>(rng.below(static_cast<uint64_t>(capacity_)));
      out.push_back(images_[idx]);
      images_[idx] = image;
    } else {
      out.push_back(image);
    }
  }
  return torch::stack(out);
}

void HistoryPool::restore(std::vector<torch::Tensor> images) {
  require(static_cast<int64_t>(images.size()) <= capacity_, ErrorKind::Load, "history pool snapshot exceeds capacity");
  images_ = std::move(images);
}

// -- optimiser ---------------------------------------------------------------

const torch::Tensor& WeightFileView::at(const std::string& name) const {
  for (const auto& [n, t] : arrays_) {
    if (n == name) return t;
  }
  fail(ErrorKind::Load, "checkpoint is missing array " + name);
}

AdamOptimizer::AdamOptimizer(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    exp_avg_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
    exp_avg_sq_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) {
      p.mutable_grad().detach_();
      p.mutable_grad().zero_();
    }
  }
}

void AdamOptimizer::step() {
  torch::NoGradGuard no_grad;
  ++step_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    exp_avg_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    exp_avg_sq_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto denom = (exp_avg_sq_[i].sqrt() / std::sqrt(bias2)).add_(eps_);
    p.addcdiv_(exp_avg_[i], denom, -lr_ / bias1);
  }
}

void AdamOptimizer::save_into(const std::string& prefix,
                              std::vector<std::pair<std::string, torch::Tensor>>& arrays) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    arrays.emplace_back(prefix + "/m/" + std::to_string(i), exp_avg_[i].clone());
    arrays.emplace_back(prefix + "/v/" + std::to_string(i), exp_avg_sq_[i].clone());
  }
}

void AdamOptimizer::load_from(const std::string& prefix, const WeightFileView& file, int64_t steps) {
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& m = file.at(prefix + "/m/" + std::to_string(i));
    const auto& v = file.at(prefix + "/v/" + std::to_string(i));
    require(m.sizes() == exp_avg_[i].sizes() && v.sizes() == exp_avg_sq_[i].sizes(), ErrorKind::Compatibility,
            "optimiser state shape mismatch for " + prefix);
    exp_avg_[i].copy_(m);
    exp_avg_sq_[i].copy_(v);
  }
  step_ = steps;
}

// -- objective ---------------------------------------------------------------

GeneratorPass generator_pass(ModelBundle& b, const torch::Tensor& x, const torch::Tensor& y, TrainMode mode,
                             const LossWeights& weights) {
  GeneratorPass pass;
  pass.fake_y = b.g_y->forward(x);
  pass.rec_x = b.g_x->forward(pass.fake_y);
  pass.fake_x = b.g_x->forward(y);
  pass.rec_y = b.g_y->forward(pass.fake_x);

  auto& t = pass.terms;
  t.adv_patch_x = losses::adversarial_loss_generator(b.d_x->forward(pass.fake_x));
  t.adv_patch_y = losses::adversarial_loss_generator(b.d_y->forward(pass.fake_y));
  const auto zero = torch::zeros({}, x.options());
  if (mode == TrainMode::Full) {
    t.adv_geo_x = losses::adversarial_loss_generator(b.dg_x->forward(b.phi.extract_taps(pass.fake_x)));
    t.adv_geo_y = losses::adversarial_loss_generator(b.dg_y->forward(b.phi.extract_taps(pass.fake_y)));
  } else {
    t.adv_geo_x = zero;
    t.adv_geo_y = zero;
  }
  if (mode == TrainMode::CycleGanBaseline) {
    t.cyc_x = losses::pixel_cycle_loss(x, pass.rec_x);
    t.cyc_y = losses::pixel_cycle_loss(y, pass.rec_y);
  } else {
    FeatureTaps real_x, real_y;
    {
      torch::NoGradGuard no_grad;
      real_x = b.phi.extract_taps(x);
      real_y = b.phi.extract_taps(y);
    }
    t.cyc_x = losses::perceptual_taps_loss(real_x, b.phi.extract_taps(pass.rec_x));
    t.cyc_y = losses::perceptual_taps_loss(real_y, b.phi.extract_taps(pass.rec_y));
  }
  pass.total = weighted_total(t, weights);
  return pass;
}

LossBreakdown evaluate_objective(ModelBundle& bundle, const torch::Tensor& x, const torch::Tensor& y, TrainMode mode,
                                 const LossWeights& weights) {
  torch::NoGradGuard no_grad;
  auto pass = generator_pass(bundle, x, y, mode, weights);
  return losses::full_objective(to_values(pass.terms), weights);
}

// -- trainer -----------------------------------------------------------------

Trainer::Trainer(ModelBundle bundle, RunConfig cfg)
    : bundle_(std::move(bundle)),
      cfg_(std::move(cfg)),
      opt_g_(params_of({bundle_.g_x.ptr().get(), bundle_.g_y.ptr().get()}), cfg_.train.learning_rate, cfg_.train.beta1,
             cfg_.train.beta2),
      opt_d_x_(params_of({bundle_.d_x.ptr().get()}), cfg_.train.learning_rate, cfg_.train.beta1, cfg_.train.beta2),
      opt_d_y_(params_of({bundle_.d_y.ptr().get()}), cfg_.train.learning_rate, cfg_.train.beta1, cfg_.train.beta2),
      opt_dg_x_(params_of({bundle_.dg_x.ptr().get()}), cfg_.train.learning_rate, cfg_.train.beta1, cfg_.train.beta2),
      opt_dg_y_(params_of({bundle_.dg_y.ptr().get()}), cfg_.train.learning_rate, cfg_.train.beta1, cfg_.train.beta2),
      pool_x_(cfg_.train.pool_size),
      pool_y_(cfg_.train.pool_size),
      rng_(mix_seed(cfg_.train.seed, 0x7a11)) {
  cfg_.validate();
  for (auto& [name, m] : bundle_.trainable()) m->train();
}

void Trainer::begin_epoch(int64_t epoch) {
  double lr = cfg_.train.learning_rate;
  if (cfg_.train.linear_decay) {
    const int64_t n = cfg_.train.epochs;
    const int64_t constant = n / 2;
    if (epoch >= constant) {
      lr *= 1.0 - static_cast<double>(epoch - constant + 1) / static_cast<double>(n - constant + 1);
    }
  }
  for (auto* o : {&opt_g_, &opt_d_x_, &opt_d_y_, &opt_dg_x_, &opt_dg_y_}) o->set_learning_rate(lr);
}

LossBreakdown Trainer::generator_update(const torch::Tensor& x, const torch::Tensor& y, GeneratorPass* pass_out) {
  torch::AutoGradMode grad_on(true);
  FreezeGuard frozen({bundle_.d_x.ptr().get(), bundle_.d_y.ptr().get(), bundle_.dg_x.ptr().get(),
                      bundle_.dg_y.ptr().get()});
  auto pass = generator_pass(bundle_, x, y, cfg_.train.mode, cfg_.train.weights);
  const LossBreakdown breakdown = losses::full_objective(to_values(pass.terms), cfg_.train.weights);
  opt_g_.zero_grad();
  pass.total.backward();
  opt_g_.step();
  if (pass_out != nullptr) {
    pass.fake_x = pass.fake_x.detach();
    pass.fake_y = pass.fake_y.detach();
    *pass_out = std::move(pass);
  }
  return breakdown;
}

DiscriminatorLosses Trainer::discriminator_update(const torch::Tensor& x, const torch::Tensor& y,
                                                  const torch::Tensor& fake_x, const torch::Tensor& fake_y,
                                                  int* updates) {
  torch::AutoGradMode grad_on(true);
  DiscriminatorLosses out;
  int n = 0;
  const auto pooled_y = pool_y_.query(fake_y.detach(), rng_);
  const auto pooled_x = pool_x_.query(fake_x.detach(), rng_);

  auto update = [&](AdamOptimizer& opt, const torch::Tensor& loss, double& slot, const char* name) {
    slot = value(loss);
    require_finite(slot, name);
    opt.zero_grad();
    loss.backward();
    opt.step();
    ++n;
  };
  update(opt_d_y_, losses::adversarial_loss_discriminator(bundle_.d_y->forward(y), bundle_.d_y->forward(pooled_y)),
         out.patch_y, "d_patch_y");
  update(opt_d_x_, losses::adversarial_loss_discriminator(bundle_.d_x->forward(x), bundle_.d_x->forward(pooled_x)),
         out.patch_x, "d_patch_x");
  if (cfg_.train.mode == TrainMode::Full) {
    FeatureTaps real_y, fake_ty, real_x, fake_tx;
    {
      torch::NoGradGuard no_grad;
      real_y = bundle_.phi.extract_taps(y);
      fake_ty = bundle_.phi.extract_taps(pooled_y);
      real_x = bundle_.phi.extract_taps(x);
      fake_tx = bundle_.phi.extract_taps(pooled_x);
    }
    update(opt_dg_y_,
           losses::adversarial_loss_discriminator(bundle_.dg_y->forward(real_y), bundle_.dg_y->forward(fake_ty)),
           out.geo_y, "d_geo_y");
    update(opt_dg_x_,
           losses::adversarial_loss_discriminator(bundle_.dg_x->forward(real_x), bundle_.dg_x->forward(fake_tx)),
           out.geo_x, "d_geo_x");
  }
  if (updates != nullptr) *updates = n;
  return out;
}

StepReport Trainer::step(const torch::Tensor& x, const torch::Tensor& y) {
  StepReport report;
  GeneratorPass pass;
  report.generator = generator_update(x, y, &pass);
  report.discriminator = discriminator_update(x, y, pass.fake_x, pass.fake_y, &report.discriminator_updates);
  return report;
}

// -- checkpoints -------------------------------------------------------------

void Trainer::save_checkpoint(const std::string& dir, int64_t epoch) const {
  auto& self = const_cast<Trainer&>(*this);
  const fs::path final_dir(dir);
  const fs::path tmp = final_dir.string() + ".partial";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) fail(ErrorKind::Io, "cannot create checkpoint directory " + tmp.string());

  for (auto& [name, module] : self.bundle_.trainable()) {
    write_weight_file((tmp / (name + ".s2pw")).string(), module_to_weights(*module, name));
  }
  bundle_.phi.save((tmp / "phi.s2pw").string());

  WeightFile optim;
  optim.network = "optimizer";
  opt_g_.save_into("G", optim.arrays);
  opt_d_x_.save_into("D_x", optim.arrays);
  opt_d_y_.save_into("D_y", optim.arrays);
  opt_dg_x_.save_into("Dg_x", optim.arrays);
  opt_dg_y_.save_into("Dg_y", optim.arrays);
  write_weight_file((tmp / "optimizer.s2pw").string(), optim);

  WeightFile pools;
  pools.network = "history_pools";
  for (size_t i = 0; i < pool_x_.images().size(); ++i) pools.arrays.emplace_back("x/" + std::to_string(i), pool_x_.images()[i]);
  for (size_t i = 0; i < pool_y_.images().size(); ++i) pools.arrays.emplace_back("y/" + std::to_string(i), pool_y_.images()[i]);
  write_weight_file((tmp / "pools.s2pw").string(), pools);

  json meta = {{"format_version", kCheckpointFormat},
               {"epoch", epoch},
               {"fingerprint", cfg_.architecture_fingerprint()},
               {"mode", to_string(cfg_.train.mode)},
               {"config", dump_config(cfg_)},
               {"rng_state", rng_.state()},
               {"pool_x", pool_x_.size()},
               {"pool_y", pool_y_.size()},
               {"optimizer_steps",
                {{"G", opt_g_.steps()},
                 {"D_x", opt_d_x_.steps()},
                 {"D_y", opt_d_y_.steps()},
                 {"Dg_x", opt_dg_x_.steps()},
                 {"Dg_y", opt_dg_y_.steps()}}},
               {"learning_rate", opt_g_.learning_rate()},
               {"phi_checksum", bundle_.phi.checksum()}};
  {
    std::ofstream out(tmp / "checkpoint.json", std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint metadata in " + tmp.string());
    out << meta.dump(2) << "\n";
  }
  fs::remove_all(final_dir, ec);
  fs::rename(tmp, final_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot finalise checkpoint " + final_dir.string() + ": " + ec.message());
}

CheckpointInfo read_checkpoint_info(const std::string& dir) {
  const fs::path meta_path = fs::path(dir) / "checkpoint.json";
  std::ifstream in(meta_path);
  if (!in) fail(ErrorKind::Load, "no checkpoint at " + dir);
  CheckpointInfo info;
  info.path = dir;
  try {
    const json meta = json::parse(in);
    require(meta.at("format_version").get<int>() == kCheckpointFormat, ErrorKind::Load,
            "unsupported checkpoint format in " + dir);
    info.epoch = meta.at("epoch").get<int64_t>();
    info.fingerprint = meta.at("fingerprint").get<std::string>();
    apply_config_yaml(info.config, meta.at("config").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Load, "malformed checkpoint metadata in " + dir + ": " + e.what());
  }
  return info;
}

int64_t Trainer::load_checkpoint(const std::string& dir) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  if (info.fingerprint != cfg_.architecture_fingerprint()) {
    fail(ErrorKind::Compatibility, "checkpoint " + dir + " was written for architecture " + info.fingerprint +
                                       ", current configuration is " + cfg_.architecture_fingerprint());
  }
  const fs::path root(dir);
  for (auto& [name, module] : bundle_.trainable()) {
    weights_to_module(read_weight_file((root / (name + ".s2pw")).string()), *module);
  }
  weights_to_module(read_weight_file((root / "phi.s2pw").string()), bundle_.phi.module());

  std::ifstream in(root / "checkpoint.json");
  const json meta = json::parse(in);
  const auto& steps = meta.at("optimizer_steps");
  const WeightFile optim = read_weight_file((root / "optimizer.s2pw").string());
  const WeightFileView view(optim.arrays);
  opt_g_.load_from("G", view, steps.at("G").get<int64_t>());
  opt_d_x_.load_from("D_x", view, steps.at("D_x").get<int64_t>());
  opt_d_y_.load_from("D_y", view, steps.at("D_y").get<int64_t>());
  opt_dg_x_.load_from("Dg_x", view, steps.at("Dg_x").get<int64_t>());
  opt_dg_y_.load_from("Dg_y", view, steps.at("Dg_y").get<int64_t>());

  const WeightFile pools = read_weight_file((root / "pools.s2pw").string());
  const WeightFileView pool_view(pools.arrays);
  std::vector<torch::Tensor> px, py;
  for (int64_t i = 0; i < meta.at("pool_x").get<int64_t>(); ++i) px.push_back(pool_view.at("x/" + std::to_string(i)).clone());
  for (int64_t i = 0; i < meta.at("pool_y").get<int64_t>(); ++i) py.push_back(pool_view.at("y/" + std::to_string(i)).clone());
  pool_x_.restore(std::move(px));
  pool_y_.restore(std::move(py));
  rng_.set_state(meta.at("rng_state").get<std::string>());
  return info.epoch;
}

ModelBundle load_bundle(const std::string& checkpoint_dir) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint_dir);
  LossNetworkConfig phi_cfg = info.config.model.phi;
  phi_cfg.provider = LossNetworkProvider::ImportedWeights;
  phi_cfg.weights_path = (fs::path(checkpoint_dir) / "phi.s2pw").string();
  ModelBundle bundle = make_bundle(info.config, build_loss_network(phi_cfg), 0);
  for (auto& [name, module] : bundle.trainable()) {
    weights_to_module(read_weight_file((fs::path(checkpoint_dir) / (name + ".s2pw")).string()), *module);
    module->eval();
  }
  return bundle;
}

std::optional<std::string> latest_checkpoint(const std::string& run_dir) {
  const fs::path latest = fs::path(run_dir) / "checkpoints" / "LATEST";
  std::ifstream in(latest);
  if (!in) return std::nullopt;
  std::string name;
  std::getline(in, name);
  if (name.empty()) return std::nullopt;
  const fs::path dir = fs::path(run_dir) / "checkpoints" / name;
  if (!fs::exists(dir / "checkpoint.json")) return std::nullopt;
  return dir.string();
}

// -- training loop -----------------------------------------------------------

namespace {

json metrics_record(const EpochMetrics& m) {
  json j = {{"epoch", m.epoch}};
  for (const auto& [name, v] : m.mean.items()) j[std::string(name)] = v;
  j["d_patch_x"] = m.discriminator.patch_x;
  j["d_patch_y"] = m.discriminator.patch_y;
  j["d_geo_x"] = m.discriminator.geo_x;
  j["d_geo_y"] = m.discriminator.geo_y;
  j["learning_rate"] = m.learning_rate;
  j["seconds"] = m.seconds;
  return j;
}

void truncate_metrics(const fs::path& path, int64_t keep_through_epoch) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        if (json::parse(line).at("epoch").get<int64_t>() <= keep_through_epoch) kept.push_back(line);
      } catch (const json::exception&) {
        // torn final line from an interrupted write
      }
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << "\n";
}

}  // namespace

TrainingResult run_training(const DatasetManifest& manifest, const RunConfig& cfg, const std::string& out_dir,
                            TrainingOptions opts) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "checkpoints", ec);
  if (ec) fail(ErrorKind::Io, "cannot create run directory " + out_dir);
  {
    std::ofstream dump(fs::path(out_dir) / "resolved_config.yaml", std::ios::trunc);
    if (!dump) fail(ErrorKind::Io, "cannot write resolved config in " + out_dir);
    dump << dump_config(cfg);
  }

  UnpairedScope unpaired;
  const StreamOptions stream_opts{cfg.data.resolution, cfg.train.seed, cfg.data.flip, cfg.data.workers};
  UnpairedStreams streams = load_unpaired(manifest, "train", stream_opts);

  std::optional<std::string> resume_from = opts.resume ? latest_checkpoint(out_dir) : std::nullopt;
  LossNetwork phi = [&] {
    if (opts.phi) return *opts.phi;
    if (resume_from) {
      LossNetworkConfig c = cfg.model.phi;
      c.provider = LossNetworkProvider::ImportedWeights;
      c.weights_path = (fs::path(*resume_from) / "phi.s2pw").string();
      return build_loss_network(c);
    }
    return prepare_loss_network(cfg);
  }();

  Trainer trainer(make_bundle(cfg, phi, cfg.train.seed), cfg);
  const fs::path metrics_path = fs::path(out_dir) / "metrics.jsonl";
  int64_t start_epoch = 0;
  if (resume_from) {
    start_epoch = trainer.load_checkpoint(*resume_from);
    truncate_metrics(metrics_path, start_epoch);
    log_info("resuming from " + *resume_from + " at epoch " + std::to_string(start_epoch));
  } else {
    std::ofstream(metrics_path, std::ios::trunc);
  }

  TrainingResult result;
  result.metrics_path = metrics_path.string();
  result.phi_checksum_before = trainer.bundle().phi.checksum();
  std::optional<std::string> last_good = resume_from;

  const auto bs = static_cast<size_t>(cfg.train.batch_size);
  const size_t na = streams.a.batches_per_epoch(bs);
  const size_t nb = streams.b.batches_per_epoch(bs);
  const size_t steps = std::max(na, nb);
  const int64_t every = cfg.train.resolved_checkpoint_every();

  for (int64_t epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    if (opts.stop_after_epoch > 0 && epoch >= opts.stop_after_epoch) break;
    const auto t0 = std::chrono::steady_clock::now();
    trainer.begin_epoch(epoch);
    ObjectiveTerms<double> sum;
    DiscriminatorLosses dsum;
    for (size_t i = 0; i < steps; ++i) {
      const auto x = streams.a.batch(epoch, i % na, bs);
      const auto y = streams.b.batch(epoch, i % nb, bs);
      StepReport r;
      try {
        r = trainer.step(x, y);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence) throw;
        fail(ErrorKind::Divergence, std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + " step " +
                                        std::to_string(i) + "; last good checkpoint: " + last_good.value_or("none"));
      }
      sum.adv_patch_x += r.generator.adv_patch_x;
      sum.adv_patch_y += r.generator.adv_patch_y;
      sum.adv_geo_x += r.generator.adv_geo_x;
      sum.adv_geo_y += r.generator.adv_geo_y;
      sum.cyc_x += r.generator.cyc_x;
      sum.cyc_y += r.generator.cyc_y;
      dsum.patch_x += r.discriminator.patch_x;
      dsum.patch_y += r.discriminator.patch_y;
      dsum.geo_x += r.discriminator.geo_x;
      dsum.geo_y += r.discriminator.geo_y;
    }
    const double n = static_cast<double>(steps);
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.mean = losses::full_objective({sum.adv_patch_x / n, sum.adv_patch_y / n, sum.adv_geo_x / n, sum.adv_geo_y / n,
                                     sum.cyc_x / n, sum.cyc_y / n},
                                    cfg.train.weights);
    m.discriminator = {dsum.patch_x / n, dsum.patch_y / n, dsum.geo_x / n, dsum.geo_y / n};
    double lr = cfg.train.learning_rate;
    if (cfg.train.linear_decay) {
      const int64_t constant = cfg.train.epochs / 2;
      if (epoch >= constant) {
        lr *= 1.0 - static_cast<double>(epoch - constant + 1) / static_cast<double>(cfg.train.epochs - constant + 1);
      }
    }
    m.learning_rate = lr;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
      std::ofstream out(metrics_path, std::ios::app);
      out << metrics_record(m).dump() << "\n";
    }
    result.epochs.push_back(m);
    if (opts.on_epoch) opts.on_epoch(m);

    if ((epoch + 1) % every == 0 || epoch + 1 == cfg.train.epochs) {
      const fs::path dir = fs::path(out_dir) / "checkpoints" / epoch_dir_name(epoch + 1);
      trainer.save_checkpoint(dir.string(), epoch + 1);
      std::ofstream(fs::path(out_dir) / "checkpoints" / "LATEST", std::ios::trunc) << epoch_dir_name(epoch + 1) << "\n";
      last_good = dir.string();
    }
  }
  result.final_checkpoint = last_good.value_or("");
  result.phi_checksum_after = trainer.bundle().phi.checksum();
  return result;
}

// -- inference ---------------------------------------------------------------

Direction parse_direction(const std::string& s) {
  if (s == "a_to_b") return Direction::AToB;
  if (s == "b_to_a") return Direction::BToA;
  fail(ErrorKind::Usage, "unknown direction '" + s + "' (expected a_to_b or b_to_a)");
}

const char* to_string(Direction d) { return d == Direction::AToB ? "a_to_b" : "b_to_a"; }

torch::Tensor translate(ModelBundle& bundle, const torch::Tensor& images, Direction direction) {
  torch::NoGradGuard no_grad;
  require(images.dim() == 4, ErrorKind::Dimension, "translate expects [N, 3, R, R]");
  Generator& g = direction == Direction::AToB ? bundle.g_y : bundle.g_x;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < images.size(0); ++i) out.push_back(g->forward(images.slice(0, i, i + 1)));
  if (out.empty()) return torch::empty({0, 3, images.size(2), images.size(3)});
  return torch::cat(out);
}

torch::Tensor translate(const std::string& checkpoint_dir, const torch::Tensor& images, Direction direction,
                        const std::optional<std::string>& expected_fingerprint) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint_dir);
  if (expected_fingerprint && *expected_fingerprint != info.fingerprint) {
    fail(ErrorKind::Compatibility, "checkpoint architecture " + info.fingerprint + " does not match requested " +
                                       *expected_fingerprint);
  }
  if (images.dim() == 4 && images.size(2) != info.config.data.resolution) {
    fail(ErrorKind::Compatibility, "checkpoint was trained at " + std::to_string(info.config.data.resolution) +
                                       "px, images are " + std::to_string(images.size(2)) + "px");
  }
  ModelBundle bundle = load_bundle(checkpoint_dir);
  return translate(bundle, images, direction);
}

}  // namespace s2p
