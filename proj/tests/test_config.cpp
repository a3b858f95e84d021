#include "msde/config.hpp"
#include "msde/runner.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

using namespace msde;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "msde_test_config" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

ConfigError parse_error(const std::string& text) {
    try {
        (void)parse_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError("", "", 0);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MSDE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSkeleton = R"({
  "seed": 3,
  "model": {"name": "brownian", "dim": 1},
  "domain": {"kind": "box", "params": {"lower": [0], "upper": [null]}},
  "grid": {"T": 1.0, "N": 64, "M": 8},
  "x0": [1],
  "options": {"skeleton": {"constant": [-2]}}
})";

}  // namespace

TEST_CASE("bundled configs parse", "[config]") {
    for (const auto& entry : fs::directory_iterator(MSDE_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        INFO(entry.path().string());
        CHECK_NOTHROW(load_config(entry.path().string()));
    }
    const ExperimentConfig c = load_config(std::string(MSDE_CONFIG_DIR) + "/rate_ou.json");
    CHECK(c.seed == 5);
    CHECK(c.grid.steps == 512);
    CHECK(c.control_intervals == 32);
    REQUIRE(c.rate.target.has_value());
    CHECK((*c.rate.target)[0] == 1.0);
}

TEST_CASE("missing seed is a config error naming the key", "[config]") {
    const ConfigError e = parse_error(R"({"model": {"name": "brownian"}})");
    CHECK(e.key() == "seed");
    CHECK_THAT(e.what(), ContainsSubstring("seed"));
}

TEST_CASE("unknown keys are rejected with their path and line", "[config]") {
    const ConfigError e = parse_error("{\n  \"seed\": 1,\n  \"model\": {\"name\": \"brownian\"},\n  \"grid\": {\"T\": 1.0,\n    \"steps\": 4}\n}");
    CHECK(e.key() == "grid.steps");
    CHECK(e.line() == 5);
}

TEST_CASE("malformed JSON reports a line", "[config]") {
    const ConfigError e = parse_error("{\n  \"seed\": 1,\n  \"grid\": {\"T\": }\n}");
    CHECK(e.line() == 3);
}

TEST_CASE("semantic validation", "[config]") {
    CHECK(parse_error(R"({"seed": 1, "model": {"name": "brownian"}, "grid": {"T": 1.0, "N": 100, "M": 7}})").key().starts_with("grid"));
    CHECK(parse_error(R"({"seed": 1, "model": {"name": "quantum"}})").key() == "model.name");
    CHECK(parse_error(R"({"seed": -4})").key() == "seed");
    // x0 must lie in the closure of the domain
    CHECK(parse_error(R"({"seed": 1, "model": {"name": "brownian"}, "domain": {"kind": "ball", "params": {"center": [0], "radius": 1}}, "x0": [3]})")
              .key() == "x0");
}

TEST_CASE("sha256 known vectors", "[manifest]") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("CLI exit codes", "[cli]") {
    const fs::path dir = scratch("exit_codes");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("no-such-subcommand") == 2);
    const fs::path bad = write_config(dir, R"({"model": {"name": "brownian"}})");
    CHECK(run_cli("skeleton --config " + bad.string() + " --out " + (dir / "out").string()) == 2);
    const fs::path good = write_config(dir, kSkeleton);
    CHECK(run_cli("skeleton --config " + good.string() + " --out " + (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "skeleton.csv"));
    CHECK(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("rate subcommand reproduces the OU rate", "[cli][rate]") {
    const fs::path dir = scratch("rate");
    RunOptions o;
    o.config_path = std::string(MSDE_CONFIG_DIR) + "/rate_ou.json";
    o.out_dir = dir.string();
    REQUIRE(run_subcommand("rate", o) == kExitOk);
    const auto j = nlohmann::json::parse(read_file(dir / "rate.json"));
    // lambda / (1 - e^{-2 lambda T}) for lambda = T = 1, target 1, start 0
    CHECK(j.at("value").get<double>() == Approx(1.0 / (1.0 - std::exp(-2.0))).margin(1e-2));
}

TEST_CASE("manifest hash tracks the config bytes", "[manifest]") {
    const fs::path dir = scratch("manifest");
    RunOptions o;
    o.config_path = write_config(dir, kSkeleton).string();
    o.out_dir = (dir / "a").string();
    REQUIRE(run_subcommand("skeleton", o) == kExitOk);
    const auto m1 = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
    CHECK(m1.at("config_sha256") == sha256_hex(kSkeleton));
    CHECK(m1.at("seed") == 3);

    o.out_dir = (dir / "b").string();
    REQUIRE(run_subcommand("skeleton", o) == kExitOk);
    CHECK(read_file(dir / "a" / "manifest.json") == read_file(dir / "b" / "manifest.json"));

    // whitespace alone changes the hash
    o.config_path = write_config(dir, std::string(kSkeleton) + "\n").string();
    o.out_dir = (dir / "c").string();
    REQUIRE(run_subcommand("skeleton", o) == kExitOk);
    const auto m3 = nlohmann::json::parse(read_file(dir / "c" / "manifest.json"));
    CHECK(m3.at("config_sha256") != m1.at("config_sha256"));
    CHECK(read_file(dir / "a" / "skeleton.csv") == read_file(dir / "c" / "skeleton.csv"));
}

TEST_CASE("simulate artifacts are byte-identical across reruns and worker counts", "[cli][determinism]") {
    const fs::path dir = scratch("determinism");
    RunOptions o;
    o.config_path = std::string(MSDE_CONFIG_DIR) + "/simulate_reflected_bm.json";
    o.out_dir = (dir / "w1").string();
    o.workers = 1;
    REQUIRE(run_subcommand("simulate", o) == kExitOk);
    o.out_dir = (dir / "w3").string();
    o.workers = 3;
    REQUIRE(run_subcommand("simulate", o) == kExitOk);
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "w1")) {
        const fs::path other = dir / "w3" / entry.path().filename();
        INFO(entry.path().filename().string());
        REQUIRE(fs::exists(other));
        CHECK(read_file(entry.path()) == read_file(other));
        ++files;
    }
    CHECK(files >= 3);

    o.seed_override = 999;
    o.out_dir = (dir / "seeded").string();
    REQUIRE(run_subcommand("simulate", o) == kExitOk);
    CHECK(read_file(dir / "w1" / "path_000.csv") != read_file(dir / "seeded" / "path_000.csv"));
    const auto m = nlohmann::json::parse(read_file(dir / "seeded" / "manifest.json"));
    CHECK(m.at("seed") == 999);
    CHECK(m.at("seed_overridden") == true);
}
