#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "specdet/run_config.hpp"

using namespace specdet;

namespace {

std::filesystem::path scratch_dir() {
  const auto d = std::filesystem::temp_directory_path() / "specdet_cfg_test";
  std::filesystem::create_directories(d);
  return d;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

}  // namespace

TEST_CASE("RunConfig defaults") {
  const RunConfig c;
  CHECK(c.model.patch_side == 5);
  CHECK(c.model.rho_low == 0.25);
  CHECK(c.model.rho_mid == 0.60);
  CHECK(c.train.ways == 10);
  CHECK(c.train.shots == 2);
  CHECK(c.train.iterations == 10000);
  CHECK(c.train.optim.learning_rate == 1e-4);
  CHECK(c.train.optim.weight_decay == 1e-2);
  CHECK(c.train.episodes_per_batch == 32);
  CHECK(c.tta.iterations == 50);
  CHECK(c.tta.q_pos == 0.95);
  CHECK(c.tta.q_neg == 0.05);
  CHECK(c.train.beta == 1.0);
  CHECK(c.train.gamma == 0.1);
  CHECK(c.tta.eta == 0.4);
  CHECK(c.train.lambda == 0.7);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("RunConfig: serialize then parse reproduces every key") {
  RunConfig a;
  apply_config_text(a, "seed = 42\ntrain.lr = 3.5e-4\nmodel.group_activation = softplus\n"
                       "train.frozen = backbone/, prior/\ntta.max_grad_norm = 2.5\n"
                       "tta.flips = false\nmodel.rho_low = 0.1\n");
  RunConfig b;
  apply_config_text(b, a.serialize());
  CHECK(a.serialize() == b.serialize());
  for (const auto& k : RunConfig::keys()) CHECK(a.get(k) == b.get(k));
  CHECK(b.seed == 42);
  CHECK(b.train.seed == 42);
  CHECK(b.tta.seed == 42);
  CHECK(b.train.optim.learning_rate == 3.5e-4);
  CHECK(b.train.frozen_prefixes == std::vector<std::string>{"backbone/", "prior/"});
  REQUIRE(b.tta.optim.max_grad_norm.has_value());
  CHECK(*b.tta.optim.max_grad_norm == 2.5);
  CHECK_FALSE(b.tta.augment.flips);
  CHECK(b.get("train.max_grad_norm") == "none");
}

TEST_CASE("RunConfig: doubles survive serialisation bit-exactly") {
  RunConfig a;
  a.train.lambda = 0.1 + 0.2;
  a.tta.augment.noise_std = 1.0 / 3.0;
  RunConfig b;
  apply_config_text(b, a.serialize());
  CHECK(b.train.lambda == a.train.lambda);
  CHECK(b.tta.augment.noise_std == a.tta.augment.noise_std);
}

TEST_CASE("RunConfig: comments, blank lines and later-wins") {
  RunConfig c;
  apply_config_text(c, "# header\n\n  threads = 3   # trailing\nthreads=2\n");
  CHECK(c.threads == 2);
  CHECK(c.train.threads == 2);
  CHECK(c.tta.threads == 2);
}

TEST_CASE("RunConfig: includes resolve relative to the including file") {
  const auto dir = scratch_dir();
  std::filesystem::create_directories(dir / "sub");
  write_file(dir / "sub" / "base.cfg", "model.patch_side = 3\ntrain.iterations = 7\n");
  write_file(dir / "main.cfg", "include sub/base.cfg\ntrain.iterations = 9\n");
  RunConfig c;
  std::set<std::string> assigned;
  apply_config_file(c, dir / "main.cfg", &assigned);
  CHECK(c.model.patch_side == 3);
  CHECK(c.train.iterations == 9);
  CHECK(assigned == std::set<std::string>{"model.patch_side", "train.iterations"});

  write_file(dir / "loop.cfg", "include loop.cfg\n");
  RunConfig d;
  CHECK_THROWS_AS(apply_config_file(d, dir / "loop.cfg"), ValidationError);
  write_file(dir / "missing.cfg", "include nowhere.cfg\n");
  CHECK_THROWS_AS(apply_config_file(d, dir / "missing.cfg"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("RunConfig: errors name the key and the line") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("train.nope", "1"), "unknown config key 'train.nope'", ValidationError);
  CHECK_THROWS_AS(c.set("train.iterations", "-3"), ValidationError);
  CHECK_THROWS_AS(c.set("train.iterations", "12x"), ValidationError);
  CHECK_THROWS_AS(c.set("train.lr", "fast"), ValidationError);
  CHECK_THROWS_AS(c.set("tta.flips", "maybe"), ValidationError);
  CHECK_THROWS_AS(c.set("model.group_activation", "tanh"), ValidationError);
  CHECK_THROWS_WITH_AS(apply_config_text(c, "seed = 1\nno equals sign\n"),
                       "<text>:2: expected key = value", ValidationError);
}

TEST_CASE("RunConfig: validation re-checks module constraints") {
  RunConfig c;
  c.model.patch_side = 4;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig{};
  c.train.ways = 5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig{};
  c.synth.bands = 16;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig{};
  c.tta.q_pos = 0.01;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig{};
  c.threads = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("RunConfig: write_run_config writes the canonical text") {
  const auto dir = scratch_dir();
  RunConfig c;
  c.set("seed", "5");
  write_run_config(c, dir / "run.cfg");
  std::ifstream is(dir / "run.cfg");
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(text == c.serialize());
  std::filesystem::remove_all(dir);
}
