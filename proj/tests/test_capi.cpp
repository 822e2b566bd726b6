// Exercises the shared library through its C header and the command-line
// tool as a subprocess. Links nothing but the C API.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "s2p/s2p.h"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(S2P_CLI_PATH) + " -q " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) r.output += buf.data();
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("s2p_capi_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  s2p_string_free(s);
  return out;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and exit codes") {
    CHECK(s2p_exit_code(S2P_OK) == 0);
    for (auto s : {S2P_ERR_USAGE, S2P_ERR_CONFIG, S2P_ERR_DIMENSION, S2P_ERR_DOMAIN, S2P_ERR_PROTOCOL}) CHECK(s2p_exit_code(s) == 2);
    for (auto s : {S2P_ERR_DATASET, S2P_ERR_IO, S2P_ERR_LOAD}) CHECK(s2p_exit_code(s) == 3);
    CHECK(s2p_exit_code(S2P_ERR_DIVERGENCE) == 4);
    CHECK(s2p_exit_code(S2P_ERR_COMPATIBILITY) == 5);
    CHECK(std::string(s2p_status_name(S2P_ERR_COMPATIBILITY)) == "compatibility");
    CHECK(std::string(s2p_version()).size() > 0);
  }

  TEST_CASE("config handle round trip and errors") {
    s2p_set_quiet(1);
    s2p_config* cfg = nullptr;
    REQUIRE(s2p_config_new(&cfg) == S2P_OK);
    CHECK(s2p_config_set(cfg, "train.epochs", "3") == S2P_OK);
    char* v = nullptr;
    REQUIRE(s2p_config_get(cfg, "train.epochs", &v) == S2P_OK);
    CHECK(take(v) == "3");
    CHECK(s2p_config_set(cfg, "train.epochz", "3") == S2P_ERR_USAGE);
    CHECK(std::string(s2p_last_error()).find("train.epochz") != std::string::npos);
    CHECK(s2p_config_set(cfg, "data.resolution", "48") == S2P_OK);
    CHECK(s2p_config_validate(cfg) == S2P_ERR_CONFIG);
    CHECK(s2p_config_set(nullptr, "train.epochs", "3") == S2P_ERR_USAGE);
    s2p_config_free(cfg);
  }

  TEST_CASE("inspect through the C API") {
    s2p_config* cfg = nullptr;
    REQUIRE(s2p_config_new(&cfg) == S2P_OK);
    char* text = nullptr;
    REQUIRE(s2p_inspect(cfg, &text) == S2P_OK);
    CHECK(take(text).find("32x32") != std::string::npos);
    s2p_config_free(cfg);
  }

  TEST_CASE("synthesizing too few identities is a usage error") {
    s2p_synth_options o;
    s2p_synth_options_default(&o);
    o.n_identities = 1;
    s2p_manifest* m = nullptr;
    const auto dir = scratch("synth");
    CHECK(s2p_synthesize_dataset(&o, dir.c_str(), &m) == S2P_ERR_USAGE);
    CHECK(m == nullptr);
    fs::remove_all(dir);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("synthesize-dataset refuses a single identity") {
    const auto dir = scratch("cli_synth");
    const auto r = run_cli("synthesize-dataset --n 1 --out " + (dir / "d").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("need ≥ 2 identities") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("inspect prints tap sizes and rejects bad resolutions") {
    auto r = run_cli("inspect --resolution 256");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("32x32") != std::string::npos);
    CHECK(r.output.find("256 + 512 (tap2) = 768") != std::string::npos);
    r = run_cli("inspect --resolution 64");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("8x8") != std::string::npos);
    r = run_cli("inspect --resolution 48");
    CHECK(r.exit_code == 2);
  }

  TEST_CASE("unknown config keys exit with a usage error naming the key") {
    const auto r = run_cli("inspect --set train.epochz=3");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("train.epochz") != std::string::npos);
    CHECK(run_cli("no-such-command").exit_code == 2);
  }

  TEST_CASE("evaluate without every mode is a usage error") {
    const auto dir = scratch("cli_eval");
    const auto r = run_cli("evaluate --manifest " + dir.string() + " --full " + dir.string());
    CHECK(r.exit_code == 2);
    fs::remove_all(dir);
  }

  TEST_CASE("train, translate and resolution mismatch") {
    const auto dir = scratch("cli_train");
    const std::string small =
        " --resolution 64 --set model.generator_width=4 --set model.residual_blocks=1 --set model.patch_width=4"
        " --set model.geometry_widths=[8,8] --set model.phi_stage_widths=[4,8,8,8,8]"
        " --set model.phi_convs_per_stage=[1,1,1,1,1]";
    auto r = run_cli("synthesize-dataset --n 4 --train-frac 0.5 --resolution 64 --out " + (dir / "data").string());
    REQUIRE(r.exit_code == 0);
    r = run_cli("train --manifest " + (dir / "data").string() + " --epochs 1 --out " + (dir / "run").string() + small);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir / "run" / "metrics.jsonl"));

    r = run_cli("translate --checkpoint " + (dir / "run").string() + " --in " + (dir / "data" / "domain_a" / "test").string() +
                " --out " + (dir / "out").string());
    INFO(r.output);
    CHECK(r.exit_code == 0);
    CHECK(std::distance(fs::directory_iterator(dir / "out"), fs::directory_iterator{}) == 2);

    r = run_cli("synthesize-dataset --n 2 --train-frac 0.5 --resolution 128 --out " + (dir / "big").string());
    REQUIRE(r.exit_code == 0);
    r = run_cli("translate --checkpoint " + (dir / "run").string() + " --in " + (dir / "big" / "domain_a" / "test").string() +
                " --out " + (dir / "out2").string());
    CHECK(r.exit_code == 5);

    r = run_cli("translate --checkpoint " + (dir / "run").string() + " --in " + (dir / "data" / "domain_a" / "test").string() +
                " --out " + (dir / "out3").string() + " --resolution 64 --set model.generator_width=8");
    CHECK(r.exit_code == 5);
    fs::remove_all(dir);
  }
}
