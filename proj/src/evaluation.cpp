#include "s2p/evaluation.hpp"

#include "s2p/error.hpp"
#include "s2p/init.hpp"
#include "s2p/log.hpp"
#include "s2p/losses.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace s2p {

double semantic_accuracy(const torch::Tensor& outputs, const torch::Tensor& ground_truth, const LossNetwork& phi) {
  require(outputs.dim() == 4 && ground_truth.dim() == 4, ErrorKind::Dimension, "semantic accuracy expects [N, 3, R, R]");
  require(outputs.size(0) == ground_truth.size(0), ErrorKind::Dimension,
          "semantic accuracy needs equal counts (" + std::to_string(outputs.size(0)) + " outputs, " +
              std::to_string(ground_truth.size(0)) + " ground-truth images)");
  require(outputs.size(0) > 0, ErrorKind::Dimension, "semantic accuracy of an empty set");
  torch::NoGradGuard no_grad;
  double sum = 0.0;
  for (int64_t i = 0; i < outputs.size(0); ++i) {
    const auto a = phi.extract_taps(outputs.slice(0, i, i + 1));
    const auto b = phi.extract_taps(ground_truth.slice(0, i, i + 1));
    sum += losses::perceptual_taps_loss(a, b).item<double>();
  }
  return sum / static_cast<double>(outputs.size(0));
}

// -- identification ----------------------------------------------------------

void Gallery::validate() const {
  require(embeddings.dim() == 2 && embeddings.size(0) == static_cast<int64_t>(ids.size()), ErrorKind::Protocol,
          "gallery needs one embedding per id");
  const std::set<std::string> unique(ids.begin(), ids.end());
  require(unique.size() == ids.size(), ErrorKind::Protocol, "gallery ids must be unique");
  if (!ids.empty()) {
    const double worst = (embeddings.norm(2, 1) - 1.0).abs().max().item<double>();
    require(worst < 1e-4, ErrorKind::Protocol, "gallery embeddings must be unit-norm");
  }
}

Gallery build_gallery(std::vector<std::string> ids, const torch::Tensor& photos, const LossNetwork& phi) {
  torch::NoGradGuard no_grad;
  Gallery g;
  g.ids = std::move(ids);
  g.embeddings = phi.embedding(photos).to(torch::kFloat64);
  g.validate();
  return g;
}

std::vector<int64_t> nearest_gallery(const torch::Tensor& probe_embeddings, const Gallery& gallery) {
  require(probe_embeddings.dim() == 2 && probe_embeddings.size(1) == gallery.embeddings.size(1), ErrorKind::Dimension,
          "probe and gallery embeddings differ in dimension");
  const auto probes = torch::nn::functional::normalize(probe_embeddings.to(torch::kFloat64),
                                                       torch::nn::functional::NormalizeFuncOptions().dim(1));
  const auto best = probes.matmul(gallery.embeddings.t()).argmax(1).contiguous();
  return {best.data_ptr<int64_t>(), best.data_ptr<int64_t>() + best.numel()};
}

double rank1_accuracy(const torch::Tensor& probe_embeddings, const std::vector<std::string>& probe_ids,
                      const Gallery& gallery) {
  require(probe_embeddings.size(0) == static_cast<int64_t>(probe_ids.size()), ErrorKind::Dimension,
          "one probe id per probe embedding");
  const std::set<std::string> known(gallery.ids.begin(), gallery.ids.end());
  for (const auto& id : probe_ids) {
    require(known.count(id) != 0, ErrorKind::Protocol, "probe identity " + id + " is not in the gallery");
  }
  if (probe_ids.empty()) return 0.0;
  const auto best = nearest_gallery(probe_embeddings, gallery);
  int64_t hits = 0;
  for (size_t i = 0; i < best.size(); ++i) hits += gallery.ids[static_cast<size_t>(best[i])] == probe_ids[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(probe_ids.size());
}

RepeatedAccuracy summarize_repeats(std::vector<double> values, std::vector<uint64_t> seeds) {
  RepeatedAccuracy r;
  r.per_repeat = std::move(values);
  r.seeds = std::move(seeds);
  const auto n = static_cast<double>(r.per_repeat.size());
  if (r.per_repeat.empty()) return r;
  r.mean = std::accumulate(r.per_repeat.begin(), r.per_repeat.end(), 0.0) / n;
  if (r.per_repeat.size() > 1) {
    double ss = 0.0;
    for (double v : r.per_repeat) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

RepeatedAccuracy identification_accuracy(const torch::Tensor& probe_embeddings,
                                         const std::vector<std::string>& probe_ids, const Gallery& gallery,
                                         int64_t n_repeats, uint64_t seed) {
  require(n_repeats >= 1, ErrorKind::Usage, "need at least one repeat");
  // Validates every probe id up front.
  rank1_accuracy(probe_embeddings, probe_ids, gallery);
  std::vector<double> values;
  std::vector<uint64_t> seeds;
  const auto n = static_cast<int64_t>(probe_ids.size());
  for (int64_t r = 0; r < n_repeats; ++r) {
    const uint64_t s = mix_seed(seed, static_cast<uint64_t>(r));
    Rng rng(s);
    std::vector<int64_t> pick(static_cast<size_t>(n));
    for (auto& p : pick) p = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
    std::vector<std::string> ids;
    for (auto p : pick) ids.push_back(probe_ids[static_cast<size_t>(p)]);
    const auto sel = n == 0 ? probe_embeddings : probe_embeddings.index_select(0, torch::tensor(pick));
    values.push_back(rank1_accuracy(sel, ids, gallery));
    seeds.push_back(s);
  }
  return summarize_repeats(std::move(values), std::move(seeds));
}

torch::Tensor random_unit_embeddings(int64_t n, int64_t dim, Rng& rng) {
  auto out = torch::empty({n, dim}, torch::kFloat64);
  auto* p = out.data_ptr<double>();
  for (int64_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int64_t k = 0; k < dim; ++k) {
      p[i * dim + k] = rng.normal();
      norm += p[i * dim + k] * p[i * dim + k];
    }
    norm = std::sqrt(norm);
    for (int64_t k = 0; k < dim; ++k) p[i * dim + k] /= norm;
  }
  return out;
}

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() >= 2 && b.size() >= 2, ErrorKind::Usage, "Welch test needs at least two samples per group");
  auto moments = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::array<double, 3>{n, mean, ss / (n - 1.0)};
  };
  const auto [na, ma, va] = moments(a);
  const auto [nb, mb, vb] = moments(b);
  const double se2 = va / na + vb / nb;
  if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

// -- realism proxy -----------------------------------------------------------

RealismReference::RealismReference(int64_t base_width, uint64_t seed) : seed_(seed) {
  net_ = PatchDiscriminator(PatchDiscriminatorSpec{base_width});
  seeded_init(*net_, seed, InitScheme::Normal002);
}

void RealismReference::train(const torch::Tensor& real, const torch::Tensor& fake, int64_t steps, int64_t batch_size,
                             double learning_rate) {
  require(real.size(0) > 0 && fake.size(0) > 0, ErrorKind::Protocol, "realism reference needs real and fake images");
  torch::AutoGradMode grad_on(true);
  net_->train();
  AdamOptimizer opt(net_->parameters(), learning_rate, 0.5, 0.999);
  Rng rng(mix_seed(seed_, 0x4ea1));
  auto draw = [&](const torch::Tensor& pool) {
    std::vector<int64_t> idx(static_cast<size_t>(batch_size));
    for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(pool.size(0))));
    return pool.index_select(0, torch::tensor(idx));
  };
  for (int64_t s = 0; s < steps; ++s) {
    const auto loss = losses::adversarial_loss_discriminator(net_->forward(draw(real)), net_->forward(draw(fake)));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  net_->eval();
  trained_ = true;
}

std::vector<double> RealismReference::scores(const torch::Tensor& images) const {
  require(trained_, ErrorKind::Protocol, "realism reference discriminator has not been trained");
  torch::NoGradGuard no_grad;
  const auto s = net_->forward(images).flatten(1).mean(1).to(torch::kFloat64).contiguous();
  return {s.data_ptr<double>(), s.data_ptr<double>() + s.numel()};
}

double RealismReference::mean_score(const torch::Tensor& images) const {
  const auto s = scores(images);
  return s.empty() ? 0.0 : std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

// -- reports -----------------------------------------------------------------

void EvalReport::validate() const {
  require(semantic_accuracy >= 0.0 && semantic_accuracy_fixed_random >= 0.0, ErrorKind::Protocol,
          "semantic accuracy must be nonnegative");
  require(identification.mean >= 0.0 && identification.mean <= 100.0 && identification.std >= 0.0,
          ErrorKind::Protocol, "identification accuracy out of range");
  require(static_cast<int64_t>(identification.per_repeat.size()) == n_repeats, ErrorKind::Protocol,
          "report must carry one value per repeat");
  require(realism_proxy >= 0.0 && realism_proxy <= 1.0, ErrorKind::Protocol, "realism proxy out of range");
}

const std::vector<std::string>& report_fields() {
  static const std::vector<std::string> fields{"method_name",
                                               "checkpoint",
                                               "semantic_accuracy",
                                               "semantic_accuracy_fixed_random_phi",
                                               "identification_accuracy",
                                               "realism_proxy",
                                               "realism_proxy_real_reference",
                                               "realism_proxy_p_value",
                                               "n_repeats",
                                               "seeds"};
  return fields;
}

json to_json(const EvalReport& r) {
  json j;
  j["method_name"] = r.method_name;
  j["checkpoint"] = r.checkpoint;
  j["semantic_accuracy"] = r.semantic_accuracy;
  j["semantic_accuracy_fixed_random_phi"] = r.semantic_accuracy_fixed_random;
  j["identification_accuracy"] = {{"mean_percent", r.identification.mean},
                                  {"std_percent", r.identification.std},
                                  {"per_repeat_percent", r.identification.per_repeat}};
  j["realism_proxy"] = r.realism_proxy;
  j["realism_proxy_real_reference"] = r.realism_proxy_real_reference;
  j["realism_proxy_p_value"] = r.realism_proxy_p_value;
  j["n_repeats"] = r.n_repeats;
  j["seeds"] = r.identification.seeds;
  return j;
}

void validate_report_json(const json& j) {
  require(j.is_object(), ErrorKind::Protocol, "report must be a JSON object");
  const auto& fields = report_fields();
  for (const auto& f : fields) require(j.contains(f), ErrorKind::Protocol, "report is missing field " + f);
  for (const auto& [k, v] : j.items()) {
    require(std::find(fields.begin(), fields.end(), k) != fields.end(), ErrorKind::Protocol,
            "report has unexpected field " + k);
  }
  require(j["method_name"].is_string() && j["checkpoint"].is_string(), ErrorKind::Protocol,
          "report names must be strings");
  for (const char* f : {"semantic_accuracy", "semantic_accuracy_fixed_random_phi", "realism_proxy",
                        "realism_proxy_real_reference", "realism_proxy_p_value"}) {
    require(j[f].is_number(), ErrorKind::Protocol, std::string("report field ") + f + " must be a number");
  }
  const auto& id = j["identification_accuracy"];
  require(id.is_object() && id.contains("mean_percent") && id.contains("std_percent") &&
              id.contains("per_repeat_percent") && id["per_repeat_percent"].is_array(),
          ErrorKind::Protocol, "malformed identification_accuracy");
  require(j["n_repeats"].is_number_integer() &&
              id["per_repeat_percent"].size() == j["n_repeats"].get<size_t>() && j["seeds"].is_array() &&
              j["seeds"].size() == j["n_repeats"].get<size_t>(),
          ErrorKind::Protocol, "per-repeat values must match n_repeats");
}

std::string render_table(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> header{"Method", "Semantic accuracy", "Identification accuracy (%)", "realism_proxy"};
  std::vector<std::vector<std::string>> rows{header};
  auto fixed = [](double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
  };
  for (const auto& r : reports) {
    rows.push_back({r.method_name, fixed(r.semantic_accuracy, 4),
                    fixed(r.identification.mean, 1) + " ± " + fixed(r.identification.std, 1),
                    fixed(r.realism_proxy, 3)});
  }
  // Display width: the "±" sign is two bytes but one column.
  auto width = [](const std::string& s) {
    size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80 ? 1 : 0;
    return w;
  };
  std::vector<size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  std::ostringstream os;
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t c = 0; c < rows[i].size(); ++c) {
      os << rows[i][c];
      if (c + 1 < rows[i].size()) os << std::string(widths[c] - width(rows[i][c]) + 3, ' ');
    }
    os << "\n";
    if (i == 0) {
      size_t total = 0;
      for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 3 : 0);
      os << std::string(total, '-') << "\n";
    }
  }
  os << "realism_proxy: mean reference-discriminator score, not a human study.\n";
  return os.str();
}

const std::vector<TrainMode>& comparison_order() {
  static const std::vector<TrainMode> order{TrainMode::Full, TrainMode::NoGeometry, TrainMode::CycleGanBaseline};
  return order;
}

// -- comparison --------------------------------------------------------------

namespace {

/// First photo (domain b) of every identity, keyed by id.
std::map<std::string, std::string> first_files(const std::vector<std::string>& files) {
  std::map<std::string, std::string> out;
  for (const auto& f : files) out.emplace(identity_of(fs::path(f).filename().string()), f);
  return out;
}

torch::Tensor stack_files(const std::vector<std::string>& files, int64_t resolution) {
  auto images = load_images(files, resolution);
  require(images.size() == files.size(), ErrorKind::Dataset, "failed to decode evaluation images");
  return torch::stack(images);
}

struct EvalSet {
  std::vector<std::string> test_ids;
  torch::Tensor sketches;  // test sketches, one per id
  torch::Tensor photos;    // paired ground-truth photos
  std::vector<std::string> gallery_ids;
  torch::Tensor gallery_photos;
};

EvalSet load_eval_set(const DatasetManifest& manifest, int64_t resolution) {
  require(manifest.has_pairing(), ErrorKind::Protocol, "evaluation needs a manifest with identity pairing");
  const auto& pairing = *manifest.pairing();
  std::map<std::string, const PairingEntry*> by_id;
  for (const auto& e : pairing) by_id[e.id] = &e;

  EvalSet set;
  std::vector<std::string> sketch_files, photo_files;
  for (const auto& id : manifest.split.test) {
    const auto it = by_id.find(id);
    require(it != by_id.end() && !it->second->domain_a_files.empty() && !it->second->domain_b_files.empty(),
            ErrorKind::Protocol, "test identity " + id + " has no pairing entry");
    set.test_ids.push_back(id);
    sketch_files.push_back((fs::path(manifest.root) / it->second->domain_a_files.front()).string());
    photo_files.push_back((fs::path(manifest.root) / it->second->domain_b_files.front()).string());
  }
  require(!set.test_ids.empty(), ErrorKind::Dataset, "test split is empty");
  set.sketches = stack_files(sketch_files, resolution);
  set.photos = stack_files(photo_files, resolution);

  std::vector<std::string> all_photos = manifest.files('b', "train");
  const auto test_photos = manifest.files('b', "test");
  all_photos.insert(all_photos.end(), test_photos.begin(), test_photos.end());
  std::vector<std::string> gallery_files;
  for (const auto& [id, file] : first_files(all_photos)) {
    set.gallery_ids.push_back(id);
    gallery_files.push_back(file);
  }
  set.gallery_photos = stack_files(gallery_files, resolution);
  return set;
}

torch::Tensor hconcat(const std::vector<torch::Tensor>& images) {
  return torch::cat(images, 2);
}

}  // namespace

ComparisonResult compare_methods(const std::map<TrainMode, std::string>& checkpoints, const DatasetManifest& manifest,
                                 const std::string& out_dir, const CompareOptions& opts) {
  for (TrainMode m : comparison_order()) {
    require(checkpoints.count(m) != 0, ErrorKind::Protocol,
            std::string("no checkpoint given for mode ") + to_string(m));
  }
  require(opts.repeats >= 1, ErrorKind::Usage, "need at least one repeat");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create evaluation directory " + out_dir);

  const CheckpointInfo full_info = read_checkpoint_info(checkpoints.at(TrainMode::Full));
  const int64_t resolution = full_info.config.data.resolution;
  std::map<TrainMode, ModelBundle> bundles;
  for (TrainMode m : comparison_order()) {
    const CheckpointInfo info = read_checkpoint_info(checkpoints.at(m));
    require(info.config.data.resolution == resolution, ErrorKind::Compatibility,
            "all checkpoints must share one resolution");
    bundles.emplace(m, load_bundle(checkpoints.at(m)));
  }
  const LossNetwork& phi = bundles.at(TrainMode::Full).phi;
  LossNetworkConfig random_cfg = phi.config();
  random_cfg.provider = LossNetworkProvider::FixedRandom;
  const LossNetwork phi_random = build_loss_network(random_cfg);

  const EvalSet set = load_eval_set(manifest, resolution);
  const Gallery gallery = build_gallery(set.gallery_ids, set.gallery_photos, phi);

  // Reference discriminator: real training photos vs. baseline translations of
  // training sketches.
  log_info("training realism reference discriminator");
  const auto train_photos = stack_files(manifest.files('b', "train"), resolution);
  const auto train_fakes =
      translate(bundles.at(TrainMode::CycleGanBaseline), stack_files(manifest.files('a', "train"), resolution),
                Direction::AToB);
  RealismReference reference(full_info.config.model.patch_width, mix_seed(opts.seed, 0x7ea1));
  reference.train(train_photos, train_fakes, opts.realism_steps);
  const auto real_scores = reference.scores(set.photos);
  const double real_mean = std::accumulate(real_scores.begin(), real_scores.end(), 0.0) / real_scores.size();

  std::map<TrainMode, RepeatedAccuracy> retrained;
  if (opts.retrain) {
    std::map<TrainMode, std::vector<double>> values;
    std::vector<uint64_t> seeds;
    std::vector<std::string> all_ids = manifest.split.train;
    all_ids.insert(all_ids.end(), manifest.split.test.begin(), manifest.split.test.end());
    const double frac = static_cast<double>(manifest.split.train.size()) / static_cast<double>(all_ids.size());
    for (int64_t r = 0; r < opts.repeats; ++r) {
      const uint64_t s = mix_seed(opts.seed, 0x1000 + static_cast<uint64_t>(r));
      seeds.push_back(s);
      DatasetManifest resplit = manifest;
      resplit.split = split_identities(all_ids, frac, s);
      const EvalSet rset = load_eval_set(resplit, resolution);
      for (TrainMode m : comparison_order()) {
        RunConfig cfg = read_checkpoint_info(checkpoints.at(m)).config;
        cfg.train.seed = s;
        const fs::path run = fs::path(out_dir) / "repeats" / ("repeat_" + std::to_string(r)) / to_string(m);
        log_info("repeat " + std::to_string(r + 1) + "/" + std::to_string(opts.repeats) + ": training " +
                 to_string(m));
        TrainingOptions topts;
        topts.phi = phi;
        const auto result = run_training(resplit, cfg, run.string(), topts);
        ModelBundle b = load_bundle(result.final_checkpoint);
        const auto outs = translate(b, rset.sketches, Direction::AToB);
        torch::NoGradGuard no_grad;
        values[m].push_back(rank1_accuracy(phi.embedding(outs), rset.test_ids, gallery));
      }
    }
    for (TrainMode m : comparison_order()) retrained[m] = summarize_repeats(values[m], seeds);
  }

  ComparisonResult result;
  std::map<TrainMode, torch::Tensor> outputs;
  for (TrainMode m : comparison_order()) {
    auto& bundle = bundles.at(m);
    const auto outs = translate(bundle, set.sketches, Direction::AToB);
    outputs[m] = outs;
    EvalReport r;
    r.method_name = to_string(m);
    r.checkpoint = checkpoints.at(m);
    r.semantic_accuracy = semantic_accuracy(outs, set.photos, phi);
    r.semantic_accuracy_fixed_random = semantic_accuracy(outs, set.photos, phi_random);
    if (opts.retrain) {
      r.identification = retrained.at(m);
    } else {
      torch::NoGradGuard no_grad;
      r.identification = identification_accuracy(phi.embedding(outs), set.test_ids, gallery, opts.repeats,
                                                 mix_seed(opts.seed, 0x1d));
    }
    const auto s = reference.scores(outs);
    r.realism_proxy = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    r.realism_proxy_real_reference = real_mean;
    r.realism_proxy_p_value = s.size() >= 2 ? welch_t_test(s, real_scores) : 1.0;
    r.n_repeats = opts.repeats;
    r.validate();
    result.reports.push_back(r);
  }

  json doc;
  doc["methods"] = json::array();
  for (const auto& r : result.reports) doc["methods"].push_back(to_json(r));
  doc["test_identities"] = set.test_ids;
  doc["gallery_size"] = set.gallery_ids.size();
  doc["protocol"] = opts.retrain ? "retrain" : "evaluation-only";
  result.report_path = (fs::path(out_dir) / "report.json").string();
  {
    std::ofstream out(result.report_path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + result.report_path);
    out << doc.dump(2) << "\n";
  }
  result.table_path = (fs::path(out_dir) / "table.txt").string();
  {
    std::ofstream out(result.table_path, std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + result.table_path);
    out << render_table(result.reports);
  }

  if (opts.write_grids) {
    fs::create_directories(fs::path(out_dir) / "grids", ec);
    for (size_t i = 0; i < set.test_ids.size(); ++i) {
      const auto idx = static_cast<int64_t>(i);
      std::vector<torch::Tensor> row{set.sketches[idx], set.photos[idx]};
      for (TrainMode m : comparison_order()) row.push_back(outputs.at(m)[idx]);
      const auto path = (fs::path(out_dir) / "grids" / (set.test_ids[i] + ".png")).string();
      write_png(path, hconcat(row));
      result.grid_paths.push_back(path);
    }
  }
  return result;
}

}  // namespace s2p
