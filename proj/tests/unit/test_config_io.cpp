#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tubeil/commands.hpp"
#include "tubeil/config.hpp"

using namespace tubeil;
namespace fs = std::filesystem;

TEST_CASE("empty config gives the defaults") {
  const RunConfig c = parse_config("{}");
  const RunConfig d;
  CHECK(c.hash() == d.hash());
  CHECK(c.hash().size() == 16);
  CHECK(c.ts == 0.1);
  CHECK(c.controller.horizon == 30);
}

TEST_CASE("strict parsing rejects unknown keys, wrong types and bad ranges") {
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"learn": {"epochs": 5, "epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"learn": {"epochs": "five"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"learn": {"epochs": 2.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"ts": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"drag_coeff": [0.1, 0.1]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"augmentations": ["VSA-x"]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"pipeline": {"envs": ["storm"]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"tube": {"force_shape": "cone"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
}

TEST_CASE("config hash ignores the output directory but not the seed") {
  const RunConfig a = parse_config(R"({"output_dir": "a"})");
  const RunConfig b = parse_config(R"({"output_dir": "b"})");
  const RunConfig c = parse_config(R"({"seed": 3})");
  const RunConfig d = parse_config(R"({"learn": {"epochs": 7}})");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash() != d.hash());
}

TEST_CASE("resolved config round trips through JSON") {
  RunConfig c = parse_config(R"({"learn": {"epochs": 7}, "pipeline": {"seeds": [4, 5]}, "seed": 11})");
  apply_full_scale(c);
  const RunConfig back = parse_config(config_to_json(c));
  CHECK(back.hash() == c.hash());
  CHECK(back.canonical_json() == c.canonical_json());
  CHECK(back.camera.width == 640);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("command-line overrides and the output environment variable") {
  const fs::path dir = fs::temp_directory_path() / "tubeil_unit_cfg";
  fs::create_directories(dir);
  const fs::path path = dir / "c.json";
  std::ofstream(path) << R"({"seed": 2, "output_dir": "from_file"})";
  CommonOptions o;
  o.config_path = path.string();
  o.seed = 9;
  o.episode_seconds = 4.0;
  o.out = "from_flag";
  ::unsetenv("TUBEIL_OUT");
  RunConfig c = resolve_config(o);
  CHECK(c.seed == 9);
  CHECK(c.reference.duration == 4.0);
  CHECK(c.output_dir == "from_flag");
  ::setenv("TUBEIL_OUT", "from_env", 1);
  c = resolve_config(o);
  CHECK(c.output_dir == "from_env");
  ::unsetenv("TUBEIL_OUT");
  o.episode_seconds = -1.0;
  CHECK_THROWS_AS(resolve_config(o), ConfigError);
  o.config_path = (dir / "missing.json").string();
  CHECK_THROWS_AS(resolve_config(CommonOptions{o.config_path}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("exceptions map to exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(EmptyResult("x", 0)) == 3);
  CHECK(exit_code_for(NotSchurStable("x")) == 3);
  CHECK(exit_code_for(ReferenceViolatesConstraints("x")) == 3);
  CHECK(exit_code_for(Error("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 4);
}
