// Command-line front end. Everything goes through the C interface.

#include "s2p/s2p.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;

/// Default parent of every output when --out is not given.
fs::path output_root() {
  const char* env = std::getenv("S2P_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("s2p_out");
}

int report(s2p_status st) {
  if (st == S2P_OK) return 0;
  std::cerr << "error: " << s2p_last_error() << "\n";
  return s2p_exit_code(st);
}

std::string take_string(char* s) {
  std::string out = s != nullptr ? s : "";
  s2p_string_free(s);
  return out;
}

using ConfigPtr = std::unique_ptr<s2p_config, decltype(&s2p_config_free)>;
using ManifestPtr = std::unique_ptr<s2p_manifest, decltype(&s2p_manifest_free)>;

/// Overrides shared by train, translate and inspect.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string mode;
  int64_t epochs = 0;
  int64_t resolution = 0;
  double lr = 0.0;
  std::string seed;

  bool any() const { return !config.empty() || !sets.empty() || resolution != 0; }
};

/// Defaults, then the file, then flags (flags win).
s2p_status resolve_config(const ConfigFlags& f, s2p_config** out) {
  s2p_config* raw = nullptr;
  if (auto st = s2p_config_new(&raw); st != S2P_OK) return st;
  ConfigPtr cfg(raw, s2p_config_free);
  if (!f.config.empty()) {
    if (auto st = s2p_config_load_file(cfg.get(), f.config.c_str()); st != S2P_OK) return st;
  }
  std::vector<std::pair<std::string, std::string>> kv;
  if (!f.mode.empty()) kv.emplace_back("train.mode", f.mode);
  if (f.epochs != 0) kv.emplace_back("train.epochs", std::to_string(f.epochs));
  if (f.resolution != 0) kv.emplace_back("data.resolution", std::to_string(f.resolution));
  if (f.lr != 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", f.lr);
    kv.emplace_back("train.learning_rate", buf);
  }
  if (!f.seed.empty()) kv.emplace_back("train.seed", f.seed);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << s << "'\n";
      return S2P_ERR_USAGE;
    }
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : kv) {
    if (auto st = s2p_config_set(cfg.get(), k.c_str(), v.c_str()); st != S2P_OK) return st;
  }
  if (auto st = s2p_config_validate(cfg.get()); st != S2P_OK) return st;
  *out = cfg.release();
  return S2P_OK;
}

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool training) {
  cmd->add_option("--config", f.config, "YAML run configuration");
  cmd->add_option("--set", f.sets, "Override one key, e.g. --set train.lambda_cyc=5");
  cmd->add_option("--resolution", f.resolution, "Image resolution (power of two, >= 64)");
  if (training) {
    cmd->add_option("--mode", f.mode, "full | no_geometry | cyclegan_baseline");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--lr", f.lr, "Learning rate");
    cmd->add_option("--seed", f.seed, "Random seed");
  }
}

// -- synthesize-dataset -------------------------------------------------------

struct SynthArgs {
  int64_t n = 123;
  double train_frac = 100.0 / 123.0;
  double jitter = 0.05;
  uint64_t seed = 1;
  int64_t resolution = 64;
  std::string style = "pencil";
  int renders = 1;
  std::string out;
};

int cmd_synthesize(const SynthArgs& a) {
  s2p_synth_options o;
  s2p_synth_options_default(&o);
  o.n_identities = a.n;
  o.train_fraction = a.train_frac;
  o.geometry_jitter = a.jitter;
  o.seed = a.seed;
  o.resolution = a.resolution;
  o.texture_style = a.style.c_str();
  o.renders_per_identity = a.renders;
  const std::string out = a.out.empty() ? (output_root() / "dataset").string() : a.out;
  s2p_manifest* raw = nullptr;
  if (auto st = s2p_synthesize_dataset(&o, out.c_str(), &raw); st != S2P_OK) return report(st);
  ManifestPtr m(raw, s2p_manifest_free);
  size_t train = 0, test = 0;
  s2p_manifest_split_sizes(m.get(), &train, &test);
  std::cout << "identities: " << train + test << "\n";
  std::cout << "split: " << train << " train / " << test << " test\n";
  std::cout << "manifest: " << s2p_manifest_path(m.get()) << "\n";
  return 0;
}

// -- train --------------------------------------------------------------------

struct TrainArgs {
  ConfigFlags cfg;
  std::string manifest;
  std::string out;
  bool resume = false;
};

void print_epoch(const s2p_epoch_info* e, void*) {
  std::printf("epoch %lld/%lld  total %.4f  patch %.4f/%.4f  geo %.4f/%.4f  cyc %.4f/%.4f  (%.1fs)\n",
              static_cast<long long>(e->epoch), static_cast<long long>(e->epochs), e->total, e->adv_patch_x,
              e->adv_patch_y, e->adv_geo_x, e->adv_geo_y, e->cyc_x, e->cyc_y, e->seconds);
  std::fflush(stdout);
}

int cmd_train(const TrainArgs& a) {
  s2p_config* raw_cfg = nullptr;
  if (auto st = resolve_config(a.cfg, &raw_cfg); st != S2P_OK) return report(st);
  ConfigPtr cfg(raw_cfg, s2p_config_free);
  std::string manifest = a.manifest;
  if (manifest.empty()) {
    char* m = nullptr;
    s2p_config_get(cfg.get(), "data.manifest", &m);
    manifest = take_string(m);
  }
  if (manifest.empty()) {
    std::cerr << "error: no dataset manifest (use --manifest or data.manifest)\n";
    return kExitUsage;
  }
  s2p_manifest* raw_m = nullptr;
  if (auto st = s2p_manifest_load(manifest.c_str(), &raw_m); st != S2P_OK) return report(st);
  ManifestPtr m(raw_m, s2p_manifest_free);
  std::string out = a.out;
  if (out.empty()) {
    char* mode = nullptr;
    s2p_config_get(cfg.get(), "train.mode", &mode);
    out = (output_root() / "runs" / take_string(mode)).string();
  }
  s2p_train_result* result = nullptr;
  const auto st = s2p_train(m.get(), cfg.get(), out.c_str(), a.resume ? 1 : 0, print_epoch, nullptr, &result);
  if (st != S2P_OK) return report(st);
  std::cout << "checkpoint: " << s2p_train_result_checkpoint(result) << "\n";
  std::cout << "metrics: " << s2p_train_result_metrics(result) << "\n";
  std::cout << "resolved config: " << s2p_train_result_config_dump(result) << "\n";
  s2p_train_result_free(result);
  return 0;
}

// -- translate ----------------------------------------------------------------

struct TranslateArgs {
  ConfigFlags cfg;
  std::string checkpoint;
  std::string in;
  std::string out;
  std::string direction = "a_to_b";
};

int cmd_translate(const TranslateArgs& a) {
  std::string fingerprint;
  if (a.cfg.any()) {
    s2p_config* raw = nullptr;
    if (auto st = resolve_config(a.cfg, &raw); st != S2P_OK) return report(st);
    ConfigPtr cfg(raw, s2p_config_free);
    char* fp = nullptr;
    if (auto st = s2p_config_fingerprint(cfg.get(), &fp); st != S2P_OK) return report(st);
    fingerprint = take_string(fp);
  }
  const std::string out = a.out.empty() ? (output_root() / "translated").string() : a.out;
  size_t n = 0;
  const auto st = s2p_translate_dir(a.checkpoint.c_str(), a.in.c_str(), out.c_str(), a.direction.c_str(),
                                    fingerprint.empty() ? nullptr : fingerprint.c_str(), &n);
  if (st != S2P_OK) return report(st);
  std::cout << "translated " << n << " images (" << a.direction << ")\n";
  std::cout << "output: " << out << "\n";
  return 0;
}

// -- evaluate -----------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest;
  std::string full, no_geometry, baseline;
  std::vector<std::string> checkpoints;  // mode=path
  int64_t repeats = 10;
  uint64_t seed = 0;
  int64_t realism_steps = 300;
  bool retrain = false;
  bool no_grids = false;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::map<std::string, std::string> by_mode;
  if (!a.full.empty()) by_mode["full"] = a.full;
  if (!a.no_geometry.empty()) by_mode["no_geometry"] = a.no_geometry;
  if (!a.baseline.empty()) by_mode["cyclegan_baseline"] = a.baseline;
  for (const auto& c : a.checkpoints) {
    const auto eq = c.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --checkpoint expects mode=path, got '" << c << "'\n";
      return kExitUsage;
    }
    by_mode[c.substr(0, eq)] = c.substr(eq + 1);
  }
  for (const char* mode : {"full", "no_geometry", "cyclegan_baseline"}) {
    if (by_mode.count(mode) == 0) {
      std::cerr << "error: missing checkpoint for mode " << mode << "\n";
      return kExitUsage;
    }
  }
  s2p_manifest* raw_m = nullptr;
  if (auto st = s2p_manifest_load(a.manifest.c_str(), &raw_m); st != S2P_OK) return report(st);
  ManifestPtr m(raw_m, s2p_manifest_free);

  std::vector<const char*> modes, paths;
  for (const auto& [mode, path] : by_mode) {
    modes.push_back(mode.c_str());
    paths.push_back(path.c_str());
  }
  s2p_eval_options o;
  s2p_eval_options_default(&o);
  o.repeats = a.repeats;
  o.seed = a.seed;
  o.realism_steps = a.realism_steps;
  o.retrain = a.retrain ? 1 : 0;
  o.write_grids = a.no_grids ? 0 : 1;
  const std::string out = a.out.empty() ? (output_root() / "evaluation").string() : a.out;
  s2p_eval_result* r = nullptr;
  const auto st = s2p_evaluate(m.get(), modes.data(), paths.data(), modes.size(), out.c_str(), &o, &r);
  if (st != S2P_OK) return report(st);
  std::cout << s2p_eval_result_table(r) << "\n";
  const auto doc = nlohmann::json::parse(s2p_eval_result_json(r));
  for (const auto& rep : doc) {
    std::cout << rep["method_name"].get<std::string>() << " per-repeat identification (%):";
    for (const auto& v : rep["identification_accuracy"]["per_repeat_percent"]) std::printf(" %.1f", v.get<double>());
    std::cout << "\n";
  }
  std::cout << "report: " << s2p_eval_result_report_path(r) << "\n";
  std::cout << "table: " << s2p_eval_result_table_path(r) << "\n";
  if (s2p_eval_result_grid_count(r) > 0) {
    std::cout << "grids: " << (fs::path(out) / "grids").string() << " (" << s2p_eval_result_grid_count(r)
              << " files)\n";
  }
  s2p_eval_result_free(r);
  return 0;
}

// -- inspect ------------------------------------------------------------------

int cmd_inspect(const ConfigFlags& f) {
  s2p_config* raw = nullptr;
  if (auto st = resolve_config(f, &raw); st != S2P_OK) return report(st);
  ConfigPtr cfg(raw, s2p_config_free);
  char* text = nullptr;
  if (auto st = s2p_inspect(cfg.get(), &text); st != S2P_OK) return report(st);
  std::cout << take_string(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired sketch-to-photo translation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");
  app.set_version_flag("--version", std::string(s2p_version()));

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synthesize-dataset", "Render a procedural sketch/photo face dataset");
  c_synth->add_option("--n", synth.n, "Number of identities")->capture_default_str();
  c_synth->add_option("--train-frac", synth.train_frac, "Fraction of identities used for training")
      ->capture_default_str();
  c_synth->add_option("--jitter", synth.jitter, "Sketch feature displacement (fraction of size)")
      ->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Dataset seed")->capture_default_str();
  c_synth->add_option("--resolution", synth.resolution, "Image size")->capture_default_str();
  c_synth->add_option("--style", synth.style, "pencil | charcoal | pen")->capture_default_str();
  c_synth->add_option("--renders", synth.renders, "Renders per identity and domain")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train one mode on a dataset");
  add_config_flags(c_train, train.cfg, true);
  c_train->add_option("--manifest", train.manifest, "Dataset manifest (file or directory)");
  c_train->add_option("--out", train.out, "Run directory");
  c_train->add_flag("--resume", train.resume, "Continue from the run's latest checkpoint");

  TranslateArgs tr;
  auto* c_tr = app.add_subcommand("translate", "Translate a directory of PNG images");
  add_config_flags(c_tr, tr.cfg, false);
  c_tr->add_option("--checkpoint", tr.checkpoint, "Checkpoint or run directory")->required();
  c_tr->add_option("--in", tr.in, "Input directory")->required();
  c_tr->add_option("--out", tr.out, "Output directory");
  c_tr->add_option("--direction", tr.direction, "a_to_b (sketch to photo) | b_to_a")->capture_default_str();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Compare the three modes on the test split");
  c_ev->add_option("--manifest", ev.manifest, "Dataset manifest (file or directory)")->required();
  c_ev->add_option("--full", ev.full, "Checkpoint of the full mode");
  c_ev->add_option("--no-geometry", ev.no_geometry, "Checkpoint of the no_geometry mode");
  c_ev->add_option("--baseline", ev.baseline, "Checkpoint of the cyclegan_baseline mode");
  c_ev->add_option("--checkpoint", ev.checkpoints, "mode=path, repeatable");
  c_ev->add_option("--repeats", ev.repeats, "Identification repeats")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Evaluation seed")->capture_default_str();
  c_ev->add_option("--realism-steps", ev.realism_steps, "Reference discriminator training steps")
      ->capture_default_str();
  c_ev->add_flag("--retrain", ev.retrain, "Retrain every mode on a fresh split per repeat");
  c_ev->add_flag("--no-grids", ev.no_grids, "Skip the comparison images");
  c_ev->add_option("--out", ev.out, "Output directory");

  ConfigFlags insp;
  auto* c_insp = app.add_subcommand("inspect", "Print the architecture shape trace");
  add_config_flags(c_insp, insp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  s2p_set_quiet(quiet ? 1 : 0);

  if (c_synth->parsed()) return cmd_synthesize(synth);
  if (c_train->parsed()) return cmd_train(train);
  if (c_tr->parsed()) return cmd_translate(tr);
  if (c_ev->parsed()) return cmd_evaluate(ev);
  if (c_insp->parsed()) return cmd_inspect(insp);
  return kExitUsage;
}
