// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Desk-scale settings are fixed
// below; the run takes roughly half an hour on one CPU core.

#include "s2p/error.hpp"
#include "s2p/evaluation.hpp"
#include "s2p/inspect.hpp"
#include "s2p/log.hpp"
#include "s2p/losses.hpp"
#include "s2p/synthetic.hpp"
#include "s2p/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace s2p;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kOracleRelTol = 1e-6;
constexpr double kGradStep = 1e-3;
constexpr double kGradRelTol = 1e-4;
constexpr double kClosedFormTol = 1e-6;
constexpr double kCycleRatio = 0.5;
constexpr double kSigmas = 3.0;
constexpr double kLossBudgetSec = 10.0;
constexpr double kGradBudgetSec = 60.0;
constexpr double kShapeBudgetSec = 10.0;
constexpr double kSmokeBudgetSec = 30.0 * 60.0;
constexpr int kSmokeEpochs = 10;
constexpr int kOrderingSeeds = 3;
constexpr int kRepeats = 10;
constexpr int64_t kResolution = 64;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double brute_mse(const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = a.to(torch::kFloat64).contiguous().flatten();
  const auto fb = b.to(torch::kFloat64).contiguous().flatten();
  const double* pa = fa.data_ptr<double>();
  const double* pb = fb.data_ptr<double>();
  double s = 0.0;
  for (int64_t i = 0; i < fa.numel(); ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return s / static_cast<double>(fa.numel());
}

double brute_l1(const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = a.to(torch::kFloat64).contiguous().flatten();
  const auto fb = b.to(torch::kFloat64).contiguous().flatten();
  const double* pa = fa.data_ptr<double>();
  const double* pb = fb.data_ptr<double>();
  double s = 0.0;
  for (int64_t i = 0; i < fa.numel(); ++i) s += std::fabs(pa[i] - pb[i]);
  return s / static_cast<double>(fa.numel());
}

double rel_err(double got, double want) { return std::fabs(got - want) / std::max(std::fabs(want), 1e-12); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunConfig desk_config() {
  RunConfig cfg;
  cfg.data.resolution = kResolution;
  cfg.model.generator_width = 16;
  cfg.model.patch_width = 16;
  cfg.model.geometry_widths = {64, 64};
  cfg.model.phi.provider = LossNetworkProvider::SyntheticTrained;
  cfg.model.phi.stage_widths = {16, 32, 64, 64, 64};
  cfg.model.phi.convs_per_stage = {1, 1, 1, 1, 1};
  cfg.train.epochs = kSmokeEpochs;
  cfg.train.batch_size = 8;
  return cfg;
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.data.resolution = kResolution;
  cfg.model.generator_width = 4;
  cfg.model.residual_blocks = 1;
  cfg.model.patch_width = 4;
  cfg.model.geometry_widths = {8, 8};
  cfg.model.phi.stage_widths = {4, 8, 8, 8, 8};
  cfg.model.phi.convs_per_stage = {1, 1, 1, 1, 1};
  cfg.train.epochs = 4;
  cfg.train.pool_size = 4;
  cfg.train.seed = 5;
  return cfg;
}

std::vector<std::string> ids_of(int64_t n) {
  std::vector<std::string> ids;
  for (int64_t i = 0; i < n; ++i) ids.push_back(synthetic_identity_id(i));
  return ids;
}

struct ModeRun {
  TrainingResult result;
  double seconds = 0.0;
};

// Shared state between criteria.
struct Context {
  fs::path root;
  std::optional<DatasetManifest> manifest;
  std::optional<LossNetwork> phi;
  // seed index -> mode -> run
  std::map<int, std::map<TrainMode, ModeRun>> runs;
  std::map<int, ComparisonResult> comparisons;
  double smoke_seconds = 0.0;
};

Context ctx;

const DatasetManifest& smoke_dataset() {
  if (!ctx.manifest) {
    SyntheticDatasetOptions o;
    o.n_identities = 123;
    o.train_fraction = 100.0 / 123.0;
    o.geometry_jitter = 0.05;
    o.resolution = kResolution;
    ctx.manifest = generate_synthetic_dataset(o, (ctx.root / "dataset").string());
  }
  return *ctx.manifest;
}

const LossNetwork& desk_phi() {
  if (!ctx.phi) ctx.phi = prepare_loss_network(desk_config());
  return *ctx.phi;
}

ModeRun& train_mode(int seed_index, TrainMode mode) {
  auto& slot = ctx.runs[seed_index];
  auto it = slot.find(mode);
  if (it != slot.end()) return it->second;
  RunConfig cfg = desk_config();
  cfg.train.mode = mode;
  cfg.train.seed = static_cast<uint64_t>(seed_index);
  TrainingOptions opts;
  opts.phi = desk_phi();
  const auto t0 = Clock::now();
  ModeRun run;
  run.result = run_training(smoke_dataset(), cfg,
                            (ctx.root / ("seed" + std::to_string(seed_index)) / to_string(mode)).string(), opts);
  run.seconds = seconds_since(t0);
  std::printf("    trained %-17s seed %d in %.0f s\n", to_string(mode), seed_index, run.seconds);
  std::fflush(stdout);
  return slot.emplace(mode, std::move(run)).first->second;
}

const ComparisonResult& compare_seed(int seed_index) {
  auto it = ctx.comparisons.find(seed_index);
  if (it != ctx.comparisons.end()) return it->second;
  std::map<TrainMode, std::string> ckpts;
  for (TrainMode m : comparison_order()) ckpts[m] = train_mode(seed_index, m).result.final_checkpoint;
  CompareOptions opts;
  opts.repeats = kRepeats;
  opts.seed = static_cast<uint64_t>(seed_index);
  opts.write_grids = seed_index == 0;
  const auto out = (ctx.root / ("seed" + std::to_string(seed_index)) / "eval").string();
  return ctx.comparisons.emplace(seed_index, compare_methods(ckpts, smoke_dataset(), out, opts)).first->second;
}

// 1. Loss identities against scalar oracles.
Outcome loss_identities() {
  const auto t0 = Clock::now();
  torch::manual_seed(101);
  double worst = 0.0;
  bool zero_ok = true;
  for (int i = 0; i < 100; ++i) {
    const int64_t b = 1 + i % 3, c = 1 + i % 4, h = 2 + i % 5, w = 3 + i % 4;
    const auto a = torch::randn({b, c, h, w}, torch::kFloat64);
    const auto d = torch::randn({b, c, h, w}, torch::kFloat64);
    zero_ok &= losses::perceptual_distance(a, a).item<double>() == 0.0;
    zero_ok &= losses::pixel_cycle_loss(a, a).item<double>() == 0.0;
    worst = std::max(worst, rel_err(losses::perceptual_distance(a, d).item<double>(), brute_mse(a, d)));
    worst = std::max(worst, rel_err(losses::pixel_cycle_loss(a, d).item<double>(), brute_l1(a, d)));
  }
  const LossNetwork phi = build_loss_network(tiny_config().model.phi).to(torch::kFloat64);
  for (int i = 0; i < 100; ++i) {
    const auto x = torch::rand({1, 3, kResolution, kResolution}, torch::kFloat64) * 2 - 1;
    const auto y = torch::rand({1, 3, kResolution, kResolution}, torch::kFloat64) * 2 - 1;
    zero_ok &= losses::perceptual_cycle_loss(x, x, phi).item<double>() == 0.0;
    const auto tx = phi.extract_taps(x);
    const auto ty = phi.extract_taps(y);
    const double oracle =
        (brute_mse(tx.tap1, ty.tap1) + brute_mse(tx.tap2, ty.tap2) + brute_mse(tx.tap3, ty.tap3)) / 3.0;
    worst = std::max(worst, rel_err(losses::perceptual_cycle_loss(x, y, phi).item<double>(), oracle));
  }
  const double secs = seconds_since(t0);
  return {zero_ok && worst < kOracleRelTol && secs < kLossBudgetSec,
          "max rel err " + fmt("%.2e", worst) + ", zero on identical " + (zero_ok ? "yes" : "no") + ", " +
              fmt("%.1f s", secs)};
}

// ReLU signs and max-pool winners of the loss network at x. Two points with
// the same pattern lie in one linear region, where the loss is quadratic.
std::vector<torch::Tensor> activation_pattern(const LossNetwork& phi, const torch::Tensor& x) {
  torch::NoGradGuard g;
  std::vector<torch::Tensor> pattern;
  torch::Tensor h = x;
  int64_t stage = 0;
  for (const auto& seq : phi.module().children()) {
    if (++stage > phi.config().tap_stages[2]) break;
    for (const auto& layer : seq->children()) {
      if (auto* conv = dynamic_cast<torch::nn::Conv2dImpl*>(layer.get())) {
        h = conv->forward(h);
      } else if (dynamic_cast<torch::nn::ReLUImpl*>(layer.get()) != nullptr) {
        pattern.push_back(h > 0);
        h = torch::relu(h);
      } else {
        auto [out, idx] = torch::max_pool2d_with_indices(h, 2, 2);
        pattern.push_back(idx);
        h = out;
      }
    }
  }
  return pattern;
}

bool same_pattern(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

struct GradCheck {
  double rel_err = 0.0;
  int redraws = 0;
};

// Directional central difference against the autograd gradient. When
// `region` is given, directions whose +-h segment leaves the linear region of
// the starting point are redrawn: a difference across a kink measures a
// different function.
GradCheck directional_check(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& at,
                            const std::function<std::vector<torch::Tensor>(const torch::Tensor&)>& region = {}) {
  auto x = at.detach().clone().requires_grad_(true);
  const auto y = f(x);
  y.backward();
  const auto grad = x.grad();
  const auto base = region ? region(at) : std::vector<torch::Tensor>{};
  GradCheck out;
  for (int attempt = 0; attempt < 200; ++attempt) {
    // Smooth losses: half along the gradient, since a purely random direction
    // in many dimensions is nearly orthogonal to it and truncation error then
    // dominates the ratio. Piecewise losses: random only, because the gradient
    // direction tends to point straight at the nearest kink; inside one region
    // the loss is quadratic and the central difference is exact.
    auto r = torch::randn_like(at);
    auto v = r / r.norm();
    if (!region) v = v + grad / grad.norm();
    v /= v.norm();
    const auto plus = at + kGradStep * v;
    const auto minus = at - kGradStep * v;
    if (region && !(same_pattern(base, region(plus)) && same_pattern(base, region(minus)))) {
      ++out.redraws;
      continue;
    }
    const double analytic = (grad * v).sum().item<double>();
    torch::NoGradGuard g;
    const double numeric = (f(plus).item<double>() - f(minus).item<double>()) / (2.0 * kGradStep);
    out.rel_err = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
    return out;
  }
  throw Error(ErrorKind::Domain, "no direction stays inside one linear region");
}

// 2. Gradient checks in float64.
Outcome gradient_checks() {
  const auto t0 = Clock::now();
  torch::manual_seed(202);
  // A narrow loss network keeps the linear regions around each point wide
  // enough for the pinned step; the loss composition under test is the same.
  const LossNetwork phi = build_loss_network(tiny_config().model.phi).to(torch::kFloat64);
  double worst_cyc = 0.0, worst_d = 0.0, worst_g = 0.0;
  int redraws = 0;
  const auto region = [&](const torch::Tensor& t) { return activation_pattern(phi, t); };
  for (int i = 0; i < 20; ++i) {
    const auto x = torch::rand({1, 3, kResolution, kResolution}, torch::kFloat64) * 2 - 1;
    const auto x_hat = torch::rand({1, 3, kResolution, kResolution}, torch::kFloat64) * 2 - 1;
    const auto cyc = directional_check(
        [&](const torch::Tensor& t) { return losses::perceptual_cycle_loss(x, t, phi); }, x_hat, region);
    worst_cyc = std::max(worst_cyc, cyc.rel_err);
    redraws += cyc.redraws;
    const auto real = torch::rand({4, 1, 6, 6}, torch::kFloat64) * 0.8 + 0.1;
    const auto fake = torch::rand({4, 1, 6, 6}, torch::kFloat64) * 0.8 + 0.1;
    worst_d = std::max(
        worst_d,
        directional_check([&](const torch::Tensor& t) { return losses::adversarial_loss_discriminator(t, fake); }, real)
            .rel_err);
    worst_d = std::max(
        worst_d,
        directional_check([&](const torch::Tensor& t) { return losses::adversarial_loss_discriminator(real, t); }, fake)
            .rel_err);
    worst_g = std::max(
        worst_g,
        directional_check([&](const torch::Tensor& t) { return losses::adversarial_loss_generator(t); }, fake).rel_err);
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({worst_cyc, worst_d, worst_g});
  return {worst < kGradRelTol && secs < kGradBudgetSec,
          "rel err cycle " + fmt("%.1e", worst_cyc) + ", disc " + fmt("%.1e", worst_d) + ", gen " +
              fmt("%.1e", worst_g) + " (h " + fmt("%.0e", kGradStep) + ", " + std::to_string(redraws) +
              " kink-crossing directions redrawn), " + fmt("%.1f s", secs)};
}

// 3. Closed-form adversarial values.
Outcome closed_forms() {
  const auto half = torch::full({8, 1, 30, 30}, 0.5, torch::kFloat64);
  const double d = losses::adversarial_loss_discriminator(half, half).item<double>();
  const double g = losses::adversarial_loss_generator(half).item<double>();
  const bool ok = std::fabs(d - 2.0 * std::log(2.0)) <= kClosedFormTol && std::fabs(g - std::log(2.0)) <= kClosedFormTol;
  return {ok, "disc " + fmt("%.9f", d) + " (2 ln 2), gen " + fmt("%.9f", g) + " (ln 2)"};
}

// 4. Shape chain at 256 and 64.
Outcome shape_chain() {
  // Loss network training is shared setup, kept outside the timed check.
  const LossNetwork& phi = desk_phi();
  const auto t0 = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (int64_t res : {256, 64}) {
    RunConfig cfg;
    cfg.data.resolution = res;
    const auto trace = trace_architecture(cfg);
    const std::array<int64_t, 3> want_taps =
        res == 256 ? std::array<int64_t, 3>{32, 16, 8} : std::array<int64_t, 3>{8, 4, 2};
    const size_t want_layers = res == 256 ? 5 : 3;
    ok &= trace.tap_sizes == want_taps;

    GeometryDiscriminator dg(cfg.geometry_spec(), trace.tap_channels, trace.tap_sizes[0]);
    ok &= dg->layer_count() == static_cast<int64_t>(want_layers);
    for (auto s : dg->strides()) ok &= s == 2;
    ok &= dg->input_channels(1) == dg->output_channels(0) + trace.tap_channels[1];
    ok &= dg->input_channels(2) == dg->output_channels(1) + trace.tap_channels[2];
    ok &= dg->output_channels(dg->layer_count() - 1) == 1;
    torch::NoGradGuard g;
    FeatureTaps taps;
    taps.tap1 = torch::randn({2, trace.tap_channels[0], want_taps[0], want_taps[0]});
    taps.tap2 = torch::randn({2, trace.tap_channels[1], want_taps[1], want_taps[1]});
    taps.tap3 = torch::randn({2, trace.tap_channels[2], want_taps[2], want_taps[2]});
    const auto p = dg->forward(taps);
    ok &= p.dim() == 1 && p.size(0) == 2;
    detail << res << "px taps " << trace.tap_sizes[0] << "/" << trace.tap_sizes[1] << "/" << trace.tap_sizes[2]
           << ", " << dg->layer_count() << " stride-2 convs; ";
  }
  // Real taps from the desk loss network feed the discriminator end to end.
  {
    torch::NoGradGuard g;
    GeometryDiscriminator dg(desk_config().geometry_spec(), phi.tap_channels(), phi.tap_sizes(kResolution)[0]);
    const auto p = dg->forward(phi.extract_taps(torch::rand({3, 3, kResolution, kResolution}) * 2 - 1));
    ok &= p.sizes() == torch::IntArrayRef({3});
  }
  const double secs = seconds_since(t0);
  detail << fmt("%.1f s", secs);
  return {ok && secs < kShapeBudgetSec, detail.str()};
}

bool all_finite(const LossBreakdown& b) {
  for (const auto& [name, v] : b.items()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

uint64_t sum_checksums(ModelBundle& b, bool generators) {
  uint64_t h = 0;
  for (auto& [name, m] : b.trainable()) {
    const bool is_gen = name.rfind("G_", 0) == 0;
    if (is_gen == generators) h = h * 1000003u ^ module_checksum(*m);
  }
  return h;
}

// 5. Frozen loss network and update isolation.
Outcome frozen_and_isolated() {
  const ModeRun& full = train_mode(0, TrainMode::Full);
  const bool frozen = full.result.phi_checksum_before == full.result.phi_checksum_after &&
                      desk_phi().checksum() == full.result.phi_checksum_before;

  RunConfig cfg = desk_config();
  Trainer t(make_bundle(cfg, desk_phi(), 9), cfg);
  const auto streams = load_unpaired(smoke_dataset(), "train", StreamOptions{kResolution, 9, false, 1});
  bool isolated = true;
  for (int step = 0; step < 5; ++step) {
    const auto x = streams.a.batch(0, step, 4);
    const auto y = streams.b.batch(0, step, 4);
    const uint64_t g0 = sum_checksums(t.bundle(), true), d0 = sum_checksums(t.bundle(), false);
    GeneratorPass pass;
    t.generator_update(x, y, &pass);
    const uint64_t g1 = sum_checksums(t.bundle(), true), d1 = sum_checksums(t.bundle(), false);
    t.discriminator_update(x, y, pass.fake_x, pass.fake_y);
    const uint64_t g2 = sum_checksums(t.bundle(), true), d2 = sum_checksums(t.bundle(), false);
    isolated &= g1 != g0 && d1 == d0 && g2 == g1 && d2 != d1;
  }
  isolated &= t.bundle().phi.checksum() == desk_phi().checksum();
  return {frozen && isolated, std::string("loss network unchanged over ") + std::to_string(kSmokeEpochs) +
                                  " epochs: " + (frozen ? "yes" : "no") + ", updates isolated: " +
                                  (isolated ? "yes" : "no")};
}

// 6. Smoke training of all three modes.
Outcome smoke_training() {
  std::ostringstream detail;
  bool ok = true;
  double total = 0.0;
  for (TrainMode m : comparison_order()) {
    const ModeRun& run = train_mode(0, m);
    total += run.seconds;
    const auto& ep = run.result.epochs;
    if (ep.size() != static_cast<size_t>(kSmokeEpochs)) {
      ok = false;
      detail << to_string(m) << " ran " << ep.size() << " epochs; ";
      continue;
    }
    bool finite = true;
    for (const auto& e : ep) finite &= all_finite(e.mean);
    const double c1 = ep.front().mean.cyc_x + ep.front().mean.cyc_y;
    const double c10 = ep.back().mean.cyc_x + ep.back().mean.cyc_y;
    const double ratio = c10 / c1;
    ok &= finite && ratio < kCycleRatio;
    detail << to_string(m) << " cyc " << fmt("%.4f", c1) << "->" << fmt("%.4f", c10) << " (" << fmt("%.2f", ratio)
           << (finite ? "" : ", non-finite") << "); ";
  }
  ctx.smoke_seconds = total;
  detail << "wall " << fmt("%.0f s", total);
  return {ok && total < kSmokeBudgetSec, detail.str()};
}

// 7. Directional ordering over seeds.
Outcome ordering() {
  std::vector<double> sem_full, sem_base, id_full, id_base;
  std::ostringstream detail;
  for (int s = 0; s < kOrderingSeeds; ++s) {
    const auto& cmp = compare_seed(s);
    const auto& full = cmp.reports.front();
    const auto& base = cmp.reports.back();
    sem_full.push_back(full.semantic_accuracy);
    sem_base.push_back(base.semantic_accuracy);
    id_full.push_back(full.identification.mean);
    id_base.push_back(base.identification.mean);
    detail << "seed " << s << ": sem " << fmt("%.4f", full.semantic_accuracy) << " vs "
           << fmt("%.4f", base.semantic_accuracy) << ", id " << fmt("%.1f", full.identification.mean) << " vs "
           << fmt("%.1f", base.identification.mean) << "; ";
  }
  const double msf = median(sem_full), msb = median(sem_base), mif = median(id_full), mib = median(id_base);
  detail << "median sem " << fmt("%.4f", msf) << " vs " << fmt("%.4f", msb) << ", median id " << fmt("%.1f", mif)
         << " vs " << fmt("%.1f", mib) << " (full vs baseline)";
  return {msf < msb && mif >= mib, detail.str()};
}

// 8. Identification chance floor.
Outcome chance_floor() {
  const int64_t n = 123;
  const int trials = 1000;
  Rng rng(808);
  const auto ids = ids_of(n);
  double hits = 0.0;
  for (int t = 0; t < trials; ++t) {
    Gallery g{ids, random_unit_embeddings(n, 64, rng)};
    hits += rank1_accuracy(random_unit_embeddings(n, 64, rng), ids, g) / 100.0 * static_cast<double>(n);
  }
  const double p = 1.0 / static_cast<double>(n);
  const double draws = static_cast<double>(n) * trials;
  const double rate = hits / draws;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  return {std::fabs(rate - p) <= kSigmas * sigma,
          "rate " + fmt("%.5f", rate) + " vs " + fmt("%.5f", p) + " +- " + fmt("%.5f", kSigmas * sigma)};
}

// 9. Resume and checkpoint round trips.
Outcome reproducibility() {
  SyntheticDatasetOptions o;
  o.n_identities = 6;
  o.train_fraction = 4.0 / 6.0;
  o.resolution = kResolution;
  const auto m = generate_synthetic_dataset(o, (ctx.root / "repro_data").string());
  const RunConfig cfg = tiny_config();
  const auto straight = run_training(m, cfg, (ctx.root / "repro_straight").string());
  TrainingOptions stop;
  stop.stop_after_epoch = cfg.train.epochs / 2;
  run_training(m, cfg, (ctx.root / "repro_resumed").string(), stop);
  TrainingOptions resume;
  resume.resume = true;
  const auto resumed = run_training(m, cfg, (ctx.root / "repro_resumed").string(), resume);

  ModelBundle a = load_bundle(straight.final_checkpoint);
  ModelBundle b = load_bundle(resumed.final_checkpoint);
  bool weights_equal = true;
  const auto na = a.trainable();
  const auto nb = b.trainable();
  for (size_t i = 0; i < na.size(); ++i) {
    const auto pa = na[i].second->parameters();
    const auto pb = nb[i].second->parameters();
    for (size_t k = 0; k < pa.size(); ++k) weights_equal &= torch::equal(pa[k], pb[k]);
  }

  // Save/load round trip of a mid-training state.
  Trainer t(make_bundle(cfg, build_loss_network(cfg.model.phi), 3), cfg);
  torch::manual_seed(909);
  const auto x = torch::rand({2, 3, kResolution, kResolution}) * 2 - 1;
  const auto y = torch::rand({2, 3, kResolution, kResolution}) * 2 - 1;
  t.step(x, y);
  const auto dir = (ctx.root / "repro_ckpt").string();
  t.save_checkpoint(dir, 1);
  ModelBundle loaded = load_bundle(dir);
  bool forward_equal = true;
  for (Direction d : {Direction::AToB, Direction::BToA}) {
    forward_equal &= torch::equal(translate(t.bundle(), x, d), translate(loaded, x, d));
  }
  {
    torch::NoGradGuard g;
    t.bundle().d_y->eval();
    forward_equal &= torch::equal(t.bundle().d_y->forward(y), loaded.d_y->forward(y));
    forward_equal &= torch::equal(t.bundle().phi.extract_taps(x).tap3, loaded.phi.extract_taps(x).tap3);
  }
  return {weights_equal && forward_equal, std::string("resumed weights bitwise equal: ") +
                                              (weights_equal ? "yes" : "no") + ", reloaded forward bitwise equal: " +
                                              (forward_equal ? "yes" : "no")};
}

// 10. Split sizes and per-repeat counts.
Outcome protocol_fidelity() {
  const auto a = split_identities(ids_of(123), 100.0 / 123.0, 1);
  const auto b = split_identities(ids_of(1194), 1000.0 / 1194.0, 1);
  bool ok = a.train.size() == 100 && a.test.size() == 23 && b.train.size() == 1000 && b.test.size() == 194;
  ok &= smoke_dataset().split.train.size() == 100 && smoke_dataset().split.test.size() == 23;

  const auto& cmp = compare_seed(0);
  std::ifstream in(cmp.report_path);
  const auto doc = nlohmann::json::parse(in);
  std::ostringstream detail;
  detail << "splits " << a.train.size() << "/" << a.test.size() << " and " << b.train.size() << "/" << b.test.size()
         << "; per-repeat values:";
  for (const auto& method : doc["methods"]) {
    validate_report_json(method);
    const auto& per = method["identification_accuracy"]["per_repeat_percent"];
    ok &= per.size() == static_cast<size_t>(kRepeats);
    detail << " " << method["method_name"].get<std::string>() << "=" << per.size();
  }
  const auto& full = cmp.reports.front().identification.per_repeat;
  detail << " (full:";
  for (double v : full) detail << " " << fmt("%.1f", v);
  detail << ")";
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  set_quiet(true);
  // Usage: s2p_acceptance [--keep DIR] [--only 1,2,...]
  std::optional<fs::path> keep_dir;
  std::set<int> only;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--keep") {
      keep_dir = argv[i + 1];
    } else if (flag == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
    }
  }
  const bool keep = keep_dir.has_value();
  ctx.root = keep ? *keep_dir : fs::temp_directory_path() / ("s2p_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(ctx.root);
  fs::create_directories(ctx.root);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, loss_identities}, {2, gradient_checks}, {3, closed_forms},    {4, shape_chain},   {8, chance_floor},
      {9, reproducibility}, {6, smoke_training},  {5, frozen_and_isolated}, {7, ordering}, {10, protocol_fidelity},
  };
  std::map<int, Outcome> results;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && only.count(id) == 0) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    results[id] = o;
  }

  std::printf("\nsummary\n");
  int failed = 0;
  for (const auto& [id, o] : results) {
    std::printf("criterion %d: %s\n", id, o.pass ? "PASS" : "FAIL");
    failed += o.pass ? 0 : 1;
  }
  if (!keep) fs::remove_all(ctx.root);
  return failed == 0 ? 0 : 1;
}
