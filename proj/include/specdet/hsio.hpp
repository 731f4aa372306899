#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specdet/binary_io.hpp"
#include "specdet/tensor.hpp"

namespace specdet {

/// H×W×B reflectance cube stored band-interleaved-by-pixel.
struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> data;
  std::vector<double> wavelengths;  // empty when absent

  HsiCube() = default;
  HsiCube(std::size_t h, std::size_t w, std::size_t b);

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t offset(std::size_t i, std::size_t j) const noexcept {
    return (i * width + j) * bands;
  }
  float& at(std::size_t i, std::size_t j, std::size_t b) noexcept { return data[offset(i, j) + b]; }
  float at(std::size_t i, std::size_t j, std::size_t b) const noexcept {
    return data[offset(i, j) + b];
  }
  /// Throws ValidationError if extents, data length, finiteness or wavelength
  /// ordering are violated.
  void validate() const;
};

/// Per-pixel class ids; 0 marks unlabeled/background.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {}
  std::uint16_t at(std::size_t i, std::size_t j) const noexcept { return labels[i * width + j]; }
};

struct CubeFile {
  HsiCube cube;
  std::optional<LabelMap> labels;
};

/// "SPHC" cube container, version 1. Errors are FormatError with codes
/// "bad magic", "bad version", "truncated", "dimension overflow".
void save_cube(const HsiCube& cube, const LabelMap* labels, const std::filesystem::path& path);
CubeFile load_cube(const std::filesystem::path& path);

struct BandStats {
  std::vector<double> min;
  std::vector<double> max;
};

/// Per-band min-max scaling to [0,1]; constant bands map to 0.
struct NormalizedCube {
  HsiCube cube;
  BandStats stats;
};
NormalizedCube normalize_bands(const HsiCube& cube);
/// Applies stats computed on a cube to a spectrum of the same band count.
std::vector<double> apply_band_normalization(const std::vector<double>& spectrum,
                                             const BandStats& stats);

/// s×s×B window around (row, col); values laid out [(di*s + dj)*B + b].
struct Patch {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t side = 1;
  std::size_t bands = 0;
  std::vector<double> values;

  std::size_t tokens() const noexcept { return side * side; }
  double at(std::size_t di, std::size_t dj, std::size_t b) const noexcept {
    return values[(di * side + dj) * bands + b];
  }
};

/// Reflects an index into [0, n) about the edges without repeating the edge sample.
std::size_t mirror_index(std::ptrdiff_t idx, std::size_t n) noexcept;
Patch extract_patch(const HsiCube& cube, std::size_t row, std::size_t col, std::size_t side);
/// Patch whose every position holds the same spectrum.
Patch tiled_patch(const std::vector<double>& spectrum, std::size_t side);

struct LabeledPatch {
  Patch patch;
  std::uint16_t class_id = 0;     // id in the label map
  std::size_t local_label = 0;    // 0-based index among the episode's classes
};

struct Episode {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::vector<std::uint16_t> classes;  // ascending class ids
  std::vector<LabeledPatch> support;
  std::vector<LabeledPatch> query;
  std::uint64_t seed = 0;
};

/// Draws an N-way K-shot episode with `query_total` query samples split evenly
/// across the chosen classes. Pure function of its arguments.
Episode sample_episode(const HsiCube& cube, const LabelMap& labels, std::size_t ways,
                       std::size_t shots, std::size_t query_total, std::uint64_t seed,
                       std::size_t patch_side = 5);

struct SpectralPrior {
  std::uint32_t material_id = 0;
  std::vector<double> values;
};

/// Reads "wavelength,value" lines or one value per line ('#' comments).
/// Resamples by linear interpolation when the sample count differs from
/// band_count: onto target_wavelengths if given, otherwise onto an even grid
/// spanning the file's own wavelength range.
SpectralPrior load_prior(const std::filesystem::path& path, std::size_t band_count,
                         const std::vector<double>& target_wavelengths = {});
void save_prior(const SpectralPrior& prior, const std::filesystem::path& path,
                const std::vector<double>& wavelengths = {});

struct SynthConfig {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t bands = 32;
  std::size_t background_classes = 4;
  double length_scale = 4.0;  // correlation length along bands, in band units
  std::size_t implant_count = 20;
  double alpha_min = 0.4;
  double alpha_max = 1.0;
  double noise_std = 0.01;
  double within_class_std = 0.02;
  std::size_t regions_per_class = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthScene {
  HsiCube cube;
  LabelMap labels;                        // 1..C background, C+1+k for implants of prior k
  std::vector<std::uint8_t> implant_mask;  // H*W, 1 at implants
  std::vector<std::vector<double>> class_spectra;  // clean background curve per class
  std::vector<double> abundances;          // H*W, α at implants, 0 elsewhere
};

/// Smooth random spectrum (squared-exponential correlation along bands).
std::vector<double> smooth_spectrum(std::size_t bands, double length_scale, double mean,
                                    double amplitude, std::uint64_t seed);
SynthScene synth_scene(const SynthConfig& cfg, const std::vector<SpectralPrior>& priors);

}  // namespace specdet
