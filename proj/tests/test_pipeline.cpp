#include "anosov/pipeline.hpp"

#include "anosov/errors.hpp"
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace anosov;
namespace fs = std::filesystem;

namespace {
using json = nlohmann::json;

Config small_config() {
  Config c;
  c.splitting.grid_x = 3;
  c.splitting.grid_t = 3;
  c.splitting.invariance_samples = 6;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anosov_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool logged(const Pipeline& p, const std::string& line) {
  return std::find(p.log().begin(), p.log().end(), line) != p.log().end();
}
}  // namespace

TEST_CASE("sha256 matches the published test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("stage names round trip") {
  for (Stage s : all_stages()) CHECK(stage_from_name(stage_name(s)) == s);
  CHECK_THROWS_AS(stage_from_name("nope"), std::invalid_argument);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_NOTHROW(parse_config(json::object()));
  CHECK_THROWS_AS(parse_config(json{{"colour", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"weight", {{"epsilon", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"weight", {{"eps", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"resonances", {{"box", {0.2, -0.5, -7, 7}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"resonances", {{"profile", "gauss"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"seed", "one"}}), ConfigError);
  const Config c = parse_config(json{{"seed", 7}, {"continuation", {{"steps", 2}}}});
  CHECK(c.seed == 7);
  CHECK(c.continuation.steps == 2);
  CHECK(c.continuation.K_max == Config{}.continuation.K_max);
  CHECK(parse_config(to_json(c)).continuation.steps == 2);
}

TEST_CASE("two runs write identical CSV") {
  const auto a = fresh_dir("repro_a"), b = fresh_dir("repro_b");
  Pipeline pa(small_config(), a, false), pb(small_config(), b, false);
  const auto& ra = pa.run(Stage::Splitting);
  const auto& rb = pb.run(Stage::Splitting);
  CHECK_FALSE(ra.failed());
  CHECK(ra.key == rb.key);
  REQUIRE_FALSE(ra.csv.empty());
  for (const auto& [stem, contents] : ra.csv) {
    CHECK(slurp(a / (stem + ".csv")) == contents);
    CHECK(slurp(a / (stem + ".csv")) == slurp(b / (stem + ".csv")));
  }
  CHECK(fs::exists(a / "splitting.json"));
}

TEST_CASE("stage cache: hit, checksum mismatch, configuration change") {
  const auto dir = fresh_dir("cache");
  std::string key;
  {
    Pipeline p(small_config(), dir);
    key = p.run(Stage::Splitting).key;
    CHECK(logged(p, "splitting: no cache"));
  }
  {
    Pipeline p(small_config(), dir);
    const auto& r = p.run(Stage::Splitting);
    CHECK(r.from_cache);
    CHECK(r.key == key);
    CHECK(logged(p, "splitting: cache hit"));
  }
  SUBCASE("tampered payload is recomputed") {
    const auto file = dir / "cache" / "splitting.cbor";
    json c = json::from_cbor(slurp(file));
    auto& bin = c["payload"].get_binary();
    bin[bin.size() / 2] ^= 0x01;
    const auto bytes = json::to_cbor(c);
    std::ofstream(file, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
    Pipeline p(small_config(), dir);
    CHECK_FALSE(p.run(Stage::Splitting).from_cache);
    CHECK(logged(p, "splitting: checksum mismatch, recomputed"));
    Pipeline again(small_config(), dir);
    CHECK(again.run(Stage::Splitting).from_cache);
  }
  SUBCASE("truncated file is recomputed") {
    const auto file = dir / "cache" / "splitting.cbor";
    const std::string bytes = slurp(file);
    std::ofstream(file, std::ios::binary) << bytes.substr(0, bytes.size() / 3);
    Pipeline p(small_config(), dir);
    CHECK_FALSE(p.run(Stage::Splitting).from_cache);
  }
  SUBCASE("changed configuration is recomputed") {
    Config c = small_config();
    c.splitting.grid_t = 4;
    Pipeline p(c, dir);
    const auto& r = p.run(Stage::Splitting);
    CHECK_FALSE(r.from_cache);
    CHECK(r.key != key);
    CHECK(logged(p, "splitting: configuration hash changed, recomputed"));
  }
  SUBCASE("no-cache mode ignores a valid cache") {
    Pipeline p(small_config(), dir, false);
    CHECK_FALSE(p.run(Stage::Splitting).from_cache);
  }
}

TEST_CASE("downstream keys depend on upstream configuration") {
  const auto dir = fresh_dir("keys");
  Config a = small_config(), b = small_config();
  b.splitting.grid_x = 4;
  // Keys only; the weight stage itself is not run here.
  Pipeline pa(a, dir / "a"), pb(b, dir / "b");
  CHECK(pa.run(Stage::Splitting).key != pb.run(Stage::Splitting).key);
}
