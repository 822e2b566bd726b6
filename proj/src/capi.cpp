#include "s2p/s2p.h"

#include "s2p/config.hpp"
#include "s2p/data.hpp"
#include "s2p/error.hpp"
#include "s2p/evaluation.hpp"
#include "s2p/inspect.hpp"
#include "s2p/log.hpp"
#include "s2p/synthetic.hpp"
#include "s2p/training.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

struct s2p_config {
  s2p::RunConfig cfg;
};

struct s2p_manifest {
  s2p::DatasetManifest manifest;
  std::string path;
};

struct s2p_train_result {
  std::string checkpoint;
  std::string metrics;
  std::string config_dump;
};

struct s2p_eval_result {
  std::string table;
  std::string json;
  std::string report_path;
  std::string table_path;
  size_t grids = 0;
};

namespace {

thread_local std::string g_last_error;

s2p_status status_of(s2p::ErrorKind k) {
  using s2p::ErrorKind;
  switch (k) {
    case ErrorKind::Usage: return S2P_ERR_USAGE;
    case ErrorKind::Config: return S2P_ERR_CONFIG;
    case ErrorKind::Dimension: return S2P_ERR_DIMENSION;
    case ErrorKind::Domain: return S2P_ERR_DOMAIN;
    case ErrorKind::Dataset: return S2P_ERR_DATASET;
    case ErrorKind::Io: return S2P_ERR_IO;
    case ErrorKind::Load: return S2P_ERR_LOAD;
    case ErrorKind::Divergence: return S2P_ERR_DIVERGENCE;
    case ErrorKind::Compatibility: return S2P_ERR_COMPATIBILITY;
    case ErrorKind::Protocol: return S2P_ERR_PROTOCOL;
  }
  return S2P_ERR_INTERNAL;
}

/// Runs f, translating exceptions into a status and the thread's last error.
template <class F>
s2p_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return S2P_OK;
  } catch (const s2p::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const c10::Error& e) {
    g_last_error = e.what_without_backtrace();
    return S2P_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return S2P_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return S2P_ERR_INTERNAL;
  }
}

void require_arg(bool ok, const char* what) {
  if (!ok) s2p::fail(s2p::ErrorKind::Usage, std::string("invalid argument: ") + what);
}

char* copy_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* s2p_version(void) { return "0.1.0"; }

const char* s2p_last_error(void) { return g_last_error.c_str(); }

const char* s2p_status_name(s2p_status status) {
  switch (status) {
    case S2P_OK: return "ok";
    case S2P_ERR_USAGE: return "usage";
    case S2P_ERR_CONFIG: return "config";
    case S2P_ERR_DIMENSION: return "dimension";
    case S2P_ERR_DOMAIN: return "domain";
    case S2P_ERR_DATASET: return "dataset";
    case S2P_ERR_IO: return "io";
    case S2P_ERR_LOAD: return "load";
    case S2P_ERR_DIVERGENCE: return "divergence";
    case S2P_ERR_COMPATIBILITY: return "compatibility";
    case S2P_ERR_PROTOCOL: return "protocol";
    case S2P_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int s2p_exit_code(s2p_status status) {
  switch (status) {
    case S2P_OK: return 0;
    case S2P_ERR_USAGE:
    case S2P_ERR_CONFIG:
    case S2P_ERR_DIMENSION:
    case S2P_ERR_DOMAIN:
    case S2P_ERR_PROTOCOL: return 2;
    case S2P_ERR_DATASET:
    case S2P_ERR_IO:
    case S2P_ERR_LOAD: return 3;
    case S2P_ERR_DIVERGENCE: return 4;
    case S2P_ERR_COMPATIBILITY: return 5;
    case S2P_ERR_INTERNAL: return 1;
  }
  return 1;
}

void s2p_string_free(char* s) { std::free(s); }

void s2p_set_quiet(int quiet) { s2p::set_quiet(quiet != 0); }

// -- configuration -----------------------------------------------------------

s2p_status s2p_config_new(s2p_config** out) {
  return guarded([&] {
    require_arg(out != nullptr, "out");
    *out = new s2p_config{};
  });
}

void s2p_config_free(s2p_config* cfg) { delete cfg; }

s2p_status s2p_config_load_file(s2p_config* cfg, const char* path) {
  return guarded([&] {
    require_arg(cfg != nullptr && path != nullptr, "config/path");
    s2p::apply_config_file(cfg->cfg, path);
  });
}

s2p_status s2p_config_set(s2p_config* cfg, const char* dotted_key, const char* value) {
  return guarded([&] {
    require_arg(cfg != nullptr && dotted_key != nullptr && value != nullptr, "config/key/value");
    s2p::set_config_value(cfg->cfg, dotted_key, value);
  });
}

s2p_status s2p_config_get(const s2p_config* cfg, const char* dotted_key, char** out) {
  return guarded([&] {
    require_arg(cfg != nullptr && dotted_key != nullptr && out != nullptr, "config/key/out");
    *out = copy_string(s2p::get_config_value(cfg->cfg, dotted_key));
  });
}

s2p_status s2p_config_validate(const s2p_config* cfg) {
  return guarded([&] {
    require_arg(cfg != nullptr, "config");
    cfg->cfg.validate();
  });
}

s2p_status s2p_config_dump(const s2p_config* cfg, char** out) {
  return guarded([&] {
    require_arg(cfg != nullptr && out != nullptr, "config/out");
    *out = copy_string(s2p::dump_config(cfg->cfg));
  });
}

s2p_status s2p_config_fingerprint(const s2p_config* cfg, char** out) {
  return guarded([&] {
    require_arg(cfg != nullptr && out != nullptr, "config/out");
    *out = copy_string(cfg->cfg.architecture_fingerprint());
  });
}

s2p_status s2p_inspect(const s2p_config* cfg, char** out) {
  return guarded([&] {
    require_arg(cfg != nullptr && out != nullptr, "config/out");
    *out = copy_string(s2p::render_trace(s2p::trace_architecture(cfg->cfg)));
  });
}

// -- datasets ----------------------------------------------------------------

void s2p_synth_options_default(s2p_synth_options* opts) {
  if (opts == nullptr) return;
  const s2p::SyntheticDatasetOptions d;
  opts->n_identities = d.n_identities;
  opts->train_fraction = d.train_fraction;
  opts->seed = d.seed;
  opts->resolution = d.resolution;
  opts->geometry_jitter = d.geometry_jitter;
  opts->texture_style = nullptr;
  opts->renders_per_identity = d.renders_per_identity;
}

s2p_status s2p_synthesize_dataset(const s2p_synth_options* opts, const char* out_dir, s2p_manifest** out) {
  return guarded([&] {
    require_arg(opts != nullptr && out_dir != nullptr, "options/out_dir");
    s2p::SyntheticDatasetOptions o;
    o.n_identities = opts->n_identities;
    o.train_fraction = opts->train_fraction;
    o.seed = opts->seed;
    o.resolution = opts->resolution;
    o.geometry_jitter = opts->geometry_jitter;
    if (opts->texture_style != nullptr) o.texture_style = s2p::parse_stroke_style(opts->texture_style);
    o.renders_per_identity = opts->renders_per_identity;
    auto m = s2p::generate_synthetic_dataset(o, out_dir);
    if (out != nullptr) *out = new s2p_manifest{std::move(m), (fs::path(out_dir) / "manifest.json").string()};
  });
}

s2p_status s2p_manifest_load(const char* path, s2p_manifest** out) {
  return guarded([&] {
    require_arg(path != nullptr && out != nullptr, "path/out");
    fs::path p(path);
    if (fs::is_directory(p)) p /= "manifest.json";
    *out = new s2p_manifest{s2p::DatasetManifest::load(p.string()), p.string()};
  });
}

void s2p_manifest_free(s2p_manifest* m) { delete m; }

s2p_status s2p_manifest_split_sizes(const s2p_manifest* m, size_t* train, size_t* test) {
  return guarded([&] {
    require_arg(m != nullptr, "manifest");
    if (train != nullptr) *train = m->manifest.split.train.size();
    if (test != nullptr) *test = m->manifest.split.test.size();
  });
}

s2p_status s2p_manifest_resolution(const s2p_manifest* m, int64_t* out) {
  return guarded([&] {
    require_arg(m != nullptr && out != nullptr, "manifest/out");
    *out = m->manifest.resolution;
  });
}

const char* s2p_manifest_path(const s2p_manifest* m) { return m != nullptr ? m->path.c_str() : ""; }

// -- training ----------------------------------------------------------------

s2p_status s2p_train(const s2p_manifest* m, const s2p_config* cfg, const char* out_dir, int resume,
                     s2p_epoch_callback callback, void* user, s2p_train_result** out) {
  return guarded([&] {
    require_arg(m != nullptr && cfg != nullptr && out_dir != nullptr, "manifest/config/out_dir");
    s2p::TrainingOptions opts;
    opts.resume = resume != 0;
    const int64_t epochs = cfg->cfg.train.epochs;
    if (callback != nullptr) {
      opts.on_epoch = [callback, user, epochs](const s2p::EpochMetrics& e) {
        s2p_epoch_info info{};
        info.epoch = e.epoch;
        info.epochs = epochs;
        info.total = e.mean.total;
        info.adv_patch_x = e.mean.adv_patch_x;
        info.adv_patch_y = e.mean.adv_patch_y;
        info.adv_geo_x = e.mean.adv_geo_x;
        info.adv_geo_y = e.mean.adv_geo_y;
        info.cyc_x = e.mean.cyc_x;
        info.cyc_y = e.mean.cyc_y;
        info.seconds = e.seconds;
        callback(&info, user);
      };
    }
    const auto result = s2p::run_training(m->manifest, cfg->cfg, out_dir, std::move(opts));
    if (out != nullptr) {
      *out = new s2p_train_result{result.final_checkpoint, result.metrics_path,
                                  (fs::path(out_dir) / "resolved_config.yaml").string()};
    }
  });
}

void s2p_train_result_free(s2p_train_result* r) { delete r; }
const char* s2p_train_result_checkpoint(const s2p_train_result* r) { return r != nullptr ? r->checkpoint.c_str() : ""; }
const char* s2p_train_result_metrics(const s2p_train_result* r) { return r != nullptr ? r->metrics.c_str() : ""; }
const char* s2p_train_result_config_dump(const s2p_train_result* r) {
  return r != nullptr ? r->config_dump.c_str() : "";
}

s2p_status s2p_latest_checkpoint(const char* run_dir, char** out) {
  return guarded([&] {
    require_arg(run_dir != nullptr && out != nullptr, "run_dir/out");
    const auto latest = s2p::latest_checkpoint(run_dir);
    if (!latest) s2p::fail(s2p::ErrorKind::Load, std::string("no checkpoint under ") + run_dir);
    *out = copy_string(*latest);
  });
}

// -- inference ---------------------------------------------------------------

s2p_status s2p_translate_dir(const char* checkpoint, const char* in_dir, const char* out_dir, const char* direction,
                             const char* expected_fingerprint, size_t* n_written) {
  return guarded([&] {
    require_arg(checkpoint != nullptr && in_dir != nullptr && out_dir != nullptr && direction != nullptr,
                "checkpoint/in_dir/out_dir/direction");
    const auto dir = s2p::parse_direction(direction);
    // A run directory resolves to its latest checkpoint.
    std::string ckpt = checkpoint;
    if (!fs::exists(fs::path(ckpt) / "checkpoint.json")) {
      if (const auto latest = s2p::latest_checkpoint(ckpt)) ckpt = *latest;
    }
    const auto info = s2p::read_checkpoint_info(ckpt);
    if (expected_fingerprint != nullptr && info.fingerprint != expected_fingerprint) {
      s2p::fail(s2p::ErrorKind::Compatibility, "checkpoint architecture " + info.fingerprint +
                                                   " does not match the requested architecture " +
                                                   expected_fingerprint);
    }
    std::vector<fs::path> inputs;
    std::error_code ec;
    if (!fs::is_directory(in_dir, ec)) s2p::fail(s2p::ErrorKind::Io, std::string("no input directory ") + in_dir);
    for (const auto& e : fs::directory_iterator(in_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
    const int64_t res = info.config.data.resolution;
    std::vector<torch::Tensor> images;
    for (const auto& p : inputs) {
      const auto raw = s2p::decode_image(p.string());
      if (raw.width != res || raw.height != res) {
        s2p::fail(s2p::ErrorKind::Compatibility, "checkpoint expects " + std::to_string(res) + "x" +
                                                     std::to_string(res) + " images, " + p.filename().string() +
                                                     " is " + std::to_string(raw.width) + "x" +
                                                     std::to_string(raw.height));
      }
      images.push_back(s2p::preprocess(raw, res));
    }
    fs::create_directories(out_dir, ec);
    if (ec) s2p::fail(s2p::ErrorKind::Io, std::string("cannot create ") + out_dir);
    size_t written = 0;
    if (!images.empty()) {
      auto bundle = s2p::load_bundle(ckpt);
      const auto outputs = s2p::translate(bundle, torch::stack(images), dir);
      for (size_t i = 0; i < inputs.size(); ++i) {
        s2p::write_png((fs::path(out_dir) / inputs[i].filename()).string(), outputs[static_cast<int64_t>(i)]);
        ++written;
      }
    }
    if (n_written != nullptr) *n_written = written;
  });
}

// -- evaluation --------------------------------------------------------------

void s2p_eval_options_default(s2p_eval_options* opts) {
  if (opts == nullptr) return;
  const s2p::CompareOptions d;
  opts->repeats = d.repeats;
  opts->seed = d.seed;
  opts->realism_steps = d.realism_steps;
  opts->retrain = d.retrain ? 1 : 0;
  opts->write_grids = d.write_grids ? 1 : 0;
}

s2p_status s2p_evaluate(const s2p_manifest* m, const char* const* modes, const char* const* checkpoints, size_t n,
                        const char* out_dir, const s2p_eval_options* opts, s2p_eval_result** out) {
  return guarded([&] {
    require_arg(m != nullptr && out_dir != nullptr && (n == 0 || (modes != nullptr && checkpoints != nullptr)),
                "manifest/modes/checkpoints/out_dir");
    std::map<s2p::TrainMode, std::string> by_mode;
    for (size_t i = 0; i < n; ++i) {
      require_arg(modes[i] != nullptr && checkpoints[i] != nullptr, "mode/checkpoint entry");
      std::string ckpt = checkpoints[i];
      if (!fs::exists(fs::path(ckpt) / "checkpoint.json")) {
        if (const auto latest = s2p::latest_checkpoint(ckpt)) ckpt = *latest;
      }
      by_mode[s2p::parse_train_mode(modes[i])] = ckpt;
    }
    s2p::CompareOptions o;
    if (opts != nullptr) {
      o.repeats = opts->repeats;
      o.seed = opts->seed;
      o.realism_steps = opts->realism_steps;
      o.retrain = opts->retrain != 0;
      o.write_grids = opts->write_grids != 0;
    }
    const auto result = s2p::compare_methods(by_mode, m->manifest, out_dir, o);
    if (out != nullptr) {
      nlohmann::json doc = nlohmann::json::array();
      for (const auto& r : result.reports) doc.push_back(s2p::to_json(r));
      *out = new s2p_eval_result{s2p::render_table(result.reports), doc.dump(2), result.report_path,
                                 result.table_path, result.grid_paths.size()};
    }
  });
}

void s2p_eval_result_free(s2p_eval_result* r) { delete r; }
const char* s2p_eval_result_table(const s2p_eval_result* r) { return r != nullptr ? r->table.c_str() : ""; }
const char* s2p_eval_result_json(const s2p_eval_result* r) { return r != nullptr ? r->json.c_str() : ""; }
const char* s2p_eval_result_report_path(const s2p_eval_result* r) {
  return r != nullptr ? r->report_path.c_str() : "";
}
const char* s2p_eval_result_table_path(const s2p_eval_result* r) { return r != nullptr ? r->table_path.c_str() : ""; }
size_t s2p_eval_result_grid_count(const s2p_eval_result* r) { return r != nullptr ? r->grids : 0; }

}  // extern "C"
