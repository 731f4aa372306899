#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "specdet/hsio.hpp"
#include "specdet/rng.hpp"

using namespace specdet;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("specdet_hsio_" + name);
}

HsiCube random_cube(std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed) {
  HsiCube c(h, w, b);
  Rng rng(seed);
  for (float& v : c.data) v = static_cast<float>(rng.uniform(-2, 5));
  return c;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

// Mirror by repeated reflection, independent of the modular formula.
std::size_t reflect_oracle(long idx, long n) {
  if (n == 1) return 0;
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
  }
  return static_cast<std::size_t>(idx);
}

}  // namespace

TEST_CASE("cube save/load round-trip is bit-exact with labels and wavelengths") {
  HsiCube cube = random_cube(3, 4, 5, 1);
  cube.wavelengths = {400.5, 410.25, 500.0, 600.0, 1000.0};
  LabelMap labels(3, 4);
  for (std::size_t p = 0; p < labels.labels.size(); ++p) labels.labels[p] = static_cast<std::uint16_t>(p * 7);
  const auto path = temp_path("rt.sphc");
  save_cube(cube, &labels, path);
  const CubeFile loaded = load_cube(path);
  CHECK(loaded.cube.height == 3);
  CHECK(loaded.cube.width == 4);
  CHECK(loaded.cube.bands == 5);
  CHECK(std::memcmp(loaded.cube.data.data(), cube.data.data(), cube.data.size() * sizeof(float)) == 0);
  CHECK(loaded.cube.wavelengths == cube.wavelengths);
  REQUIRE(loaded.labels.has_value());
  CHECK(loaded.labels->labels == labels.labels);
  std::filesystem::remove(path);
}

TEST_CASE("1x1x1 cube round-trip without labels") {
  HsiCube cube(1, 1, 1);
  cube.data[0] = 0.123456789f;
  const auto path = temp_path("one.sphc");
  save_cube(cube, nullptr, path);
  const CubeFile loaded = load_cube(path);
  CHECK(loaded.cube.data[0] == cube.data[0]);
  CHECK_FALSE(loaded.labels.has_value());
  CHECK(loaded.cube.wavelengths.empty());
  std::filesystem::remove(path);
}

TEST_CASE("cube loader reports distinct error codes") {
  const auto path = temp_path("bad.sphc");
  auto code_of = [&path] {
    try {
      load_cube(path);
    } catch (const FormatError& e) {
      return e.code();
    }
    return std::string("none");
  };

  write_text(path, "NOPE\x01\x00");
  CHECK(code_of() == "bad magic");

  HsiCube cube = random_cube(2, 2, 3, 2);
  save_cube(cube, nullptr, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK(code_of() == "truncated");

  {
    std::ofstream os(path, std::ios::binary);
    os.write("SPHC", 4);
    binio::put_le<std::uint16_t>(os, 1);
    for (int k = 0; k < 3; ++k) binio::put_le<std::uint32_t>(os, 0xFFFFFFF0u);
    binio::put_le<std::uint8_t>(os, 0);
  }
  CHECK(code_of() == "dimension overflow");
  std::filesystem::remove(path);
}

TEST_CASE("normalize_bands: affine map, constant band, idempotence") {
  HsiCube cube(1, 3, 2);
  const float vals[] = {2, 5, 4, 5, 6, 5};
  std::copy(std::begin(vals), std::end(vals), cube.data.begin());
  const auto norm = normalize_bands(cube);
  CHECK(norm.cube.at(0, 0, 0) == 0.0f);
  CHECK(norm.cube.at(0, 1, 0) == 0.5f);
  CHECK(norm.cube.at(0, 2, 0) == 1.0f);
  for (std::size_t j = 0; j < 3; ++j) CHECK(norm.cube.at(0, j, 1) == 0.0f);
  CHECK(norm.stats.min[0] == 2.0);
  CHECK(norm.stats.max[0] == 6.0);

  const HsiCube r = random_cube(5, 6, 4, 3);
  const auto once = normalize_bands(r).cube;
  const auto twice = normalize_bands(once).cube;
  CHECK(once.data == twice.data);
}

TEST_CASE("extract_patch: interior, single pixel, mirrored corner") {
  const HsiCube cube = random_cube(9, 9, 3, 4);
  const Patch p = extract_patch(cube, 4, 4, 5);
  for (std::size_t di = 0; di < 5; ++di)
    for (std::size_t dj = 0; dj < 5; ++dj)
      for (std::size_t b = 0; b < 3; ++b) CHECK(p.at(di, dj, b) == cube.at(2 + di, 2 + dj, b));

  const Patch one = extract_patch(cube, 7, 2, 1);
  CHECK(one.values.size() == 3);
  for (std::size_t b = 0; b < 3; ++b) CHECK(one.values[b] == cube.at(7, 2, b));

  HsiCube tiny(2, 2, 1);
  tiny.data = {1, 2, 3, 4};
  const Patch corner = extract_patch(tiny, 0, 0, 3);
  const std::vector<double> expected = {4, 3, 4, 2, 1, 2, 4, 3, 4};
  CHECK(corner.values == expected);

  CHECK_THROWS_AS(extract_patch(cube, 1, 1, 4), ValidationError);
}

TEST_CASE("extract_patch matches the gather-with-mirror oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HsiCube cube = random_cube(8, 8, 4, seed);
    for (std::size_t s = 1; s <= 7; s += 2) {
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
          const Patch p = extract_patch(cube, i, j, s);
          const long h = static_cast<long>(s / 2);
          bool ok = true;
          for (std::size_t di = 0; di < s; ++di)
            for (std::size_t dj = 0; dj < s; ++dj) {
              const auto r = reflect_oracle(static_cast<long>(i + di) - h, 8);
              const auto c = reflect_oracle(static_cast<long>(j + dj) - h, 8);
              for (std::size_t b = 0; b < 4; ++b) ok = ok && p.at(di, dj, b) == cube.at(r, c, b);
            }
          CHECK(ok);
        }
      }
    }
  }
}

namespace {

// 10 classes laid out in vertical stripes of 4 columns each over 6 rows.
std::pair<HsiCube, LabelMap> striped_scene() {
  HsiCube cube = random_cube(6, 40, 3, 9);
  LabelMap labels(6, 40);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 40; ++j) labels.labels[i * 40 + j] = static_cast<std::uint16_t>(j / 4 + 1);
  return {cube, labels};
}

}  // namespace

TEST_CASE("sample_episode: 10-way 2-shot support size and determinism") {
  const auto [cube, labels] = striped_scene();
  const Episode ep = sample_episode(cube, labels, 10, 2, 30, 11, 3);
  CHECK(ep.support.size() == 20);
  CHECK(ep.query.size() == 30);
  CHECK(ep.classes.size() == 10);
  CHECK(std::is_sorted(ep.classes.begin(), ep.classes.end()));
  for (std::size_t c = 0; c < 10; ++c) {
    const auto n = std::count_if(ep.support.begin(), ep.support.end(),
                                 [c](const LabeledPatch& lp) { return lp.local_label == c; });
    CHECK(n == 2);
  }
  const Episode again = sample_episode(cube, labels, 10, 2, 30, 11, 3);
  for (std::size_t k = 0; k < ep.query.size(); ++k) {
    CHECK(ep.query[k].patch.row == again.query[k].patch.row);
    CHECK(ep.query[k].patch.col == again.query[k].patch.col);
    CHECK(ep.query[k].patch.values == again.query[k].patch.values);
  }
}

TEST_CASE("sample_episode: support and query locations are disjoint") {
  const auto [cube, labels] = striped_scene();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Episode ep = sample_episode(cube, labels, 4, 3, 12, seed, 1);
    std::set<std::pair<std::size_t, std::size_t>> support;
    for (const auto& lp : ep.support) support.emplace(lp.patch.row, lp.patch.col);
    bool disjoint = true;
    for (const auto& lp : ep.query) disjoint = disjoint && !support.count({lp.patch.row, lp.patch.col});
    CHECK(disjoint);
    CHECK(support.size() == ep.support.size());
  }
}

TEST_CASE("sample_episode: insufficient class names the class") {
  auto [cube, labels] = striped_scene();
  // shrink class 3 to a single pixel
  for (auto& l : labels.labels) {
    if (l == 3) l = 0;
  }
  labels.labels[8] = 3;
  bool raised = false;
  for (std::uint64_t seed = 0; seed < 20 && !raised; ++seed) {
    try {
      sample_episode(cube, labels, 10, 2, 10, seed, 1);
    } catch (const ValidationError& e) {
      raised = true;
      CHECK(std::string(e.what()).find("class 3") != std::string::npos);
    }
  }
  CHECK(raised);
  CHECK_THROWS_AS(sample_episode(cube, labels, 11, 1, 0, 0, 1), ValidationError);
}

TEST_CASE("synth_scene: mixing identities and implant count") {
  SynthConfig cfg;
  cfg.height = 12;
  cfg.width = 10;
  cfg.bands = 8;
  cfg.implant_count = 7;
  cfg.noise_std = 0.0;
  cfg.alpha_min = cfg.alpha_max = 1.0;
  SpectralPrior prior{1, smooth_spectrum(8, 3.0, 0.6, 0.2, 77)};
  const SynthScene full = synth_scene(cfg, {prior});
  CHECK(std::count(full.implant_mask.begin(), full.implant_mask.end(), 1) == 7);
  for (std::size_t p = 0; p < full.implant_mask.size(); ++p) {
    if (!full.implant_mask[p]) continue;
    for (std::size_t b = 0; b < 8; ++b) CHECK(full.cube.data[p * 8 + b] == static_cast<float>(prior.values[b]));
    CHECK(full.labels.labels[p] == cfg.background_classes + 1);
  }

  // With α = 0 the implant pixels carry the background draw, whatever the prior.
  cfg.alpha_min = cfg.alpha_max = 0.0;
  SpectralPrior other{2, smooth_spectrum(8, 3.0, 0.1, 0.5, 78)};
  const SynthScene a = synth_scene(cfg, {prior});
  const SynthScene b = synth_scene(cfg, {other});
  CHECK(a.cube.data == b.cube.data);
  CHECK(a.implant_mask == b.implant_mask);
}

TEST_CASE("synth_scene: normalised implants equal the normalised prior") {
  SynthConfig cfg;
  cfg.height = cfg.width = 10;
  cfg.bands = 16;
  cfg.implant_count = 5;
  cfg.noise_std = 0.0;
  cfg.alpha_min = cfg.alpha_max = 1.0;
  SpectralPrior prior{1, smooth_spectrum(16, 4.0, 0.5, 0.15, 5)};
  const SynthScene scene = synth_scene(cfg, {prior});
  const auto norm = normalize_bands(scene.cube);
  const auto np = apply_band_normalization(prior.values, norm.stats);
  for (std::size_t p = 0; p < scene.implant_mask.size(); ++p) {
    if (!scene.implant_mask[p]) continue;
    for (std::size_t b = 0; b < 16; ++b) CHECK(norm.cube.data[p * 16 + b] == static_cast<float>(np[b]));
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.alpha_min = 0.8;
  cfg.alpha_max = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.implant_count = cfg.height * cfg.width;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("load_prior: verbatim, interpolation, errors") {
  const auto path = temp_path("prior.txt");
  write_text(path, "# lab spectrum\n0.1\n0.2\n0.3\n");
  CHECK(load_prior(path, 3).values == std::vector<double>{0.1, 0.2, 0.3});

  write_text(path, "400,0\n800,1 # ramp\n");
  const auto ramp = load_prior(path, 5).values;
  const std::vector<double> expected = {0, 0.25, 0.5, 0.75, 1};
  REQUIRE(ramp.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(ramp[k] == doctest::Approx(expected[k]).epsilon(1e-12));

  const auto on_grid = load_prior(path, 3, {400, 700, 900}).values;
  CHECK(on_grid[1] == doctest::Approx(0.75));
  CHECK(on_grid[2] == doctest::Approx(1.0));

  write_text(path, "500,0\n400,1\n600,2\n");
  CHECK_THROWS_AS(load_prior(path, 5), ValidationError);

  write_text(path, "0.5\n");
  CHECK_THROWS_AS(load_prior(path, 4), ValidationError);

  write_text(path, "400,0\n0.3\n");
  CHECK_THROWS_AS(load_prior(path, 4), ValidationError);
  std::filesystem::remove(path);
}

TEST_CASE("save_prior/load_prior round-trip") {
  const auto path = temp_path("prior_rt.txt");
  SpectralPrior prior{3, {0.1, 0.25, 0.7}};
  save_prior(prior, path, {400, 500, 600});
  CHECK(load_prior(path, 3).values == prior.values);
  std::filesystem::remove(path);
}
