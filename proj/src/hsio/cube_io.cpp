#include <cmath>
#include <fstream>

#include "specdet/hsio.hpp"

namespace specdet {

namespace {

constexpr char kCubeMagic[4] = {'S', 'P', 'H', 'C'};
constexpr std::uint16_t kCubeVersion = 1;
constexpr std::uint8_t kFlagWavelengths = 0x1;
constexpr std::uint8_t kFlagLabels = 0x2;
// Refuse cubes above 2^31 samples; anything larger is not memory-resident here.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 31;

}  // namespace

HsiCube::HsiCube(std::size_t h, std::size_t w, std::size_t b)
    : height(h), width(w), bands(b), data(h * w * b, 0.0f) {}

void HsiCube::validate() const {
  if (height == 0 || width == 0 || bands == 0) throw ValidationError("cube extents must be >= 1");
  if (data.size() != height * width * bands) throw ValidationError("cube data length mismatch");
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError("cube contains non-finite values");
  }
  if (!wavelengths.empty()) {
    if (wavelengths.size() != bands) throw ValidationError("wavelength count != band count");
    for (std::size_t k = 1; k < wavelengths.size(); ++k) {
      if (!(wavelengths[k] > wavelengths[k - 1])) {
        throw ValidationError("wavelengths must be strictly increasing");
      }
    }
  }
}

void save_cube(const HsiCube& cube, const LabelMap* labels, const std::filesystem::path& path) {
  cube.validate();
  if (labels && (labels->height != cube.height || labels->width != cube.width ||
                 labels->labels.size() != cube.pixels())) {
    throw ValidationError("label map dimensions do not match cube");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kCubeMagic, 4);
  binio::put_le<std::uint16_t>(os, kCubeVersion);
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cube.height));
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cube.width));
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cube.bands));
  std::uint8_t flags = 0;
  if (!cube.wavelengths.empty()) flags |= kFlagWavelengths;
  if (labels) flags |= kFlagLabels;
  binio::put_le<std::uint8_t>(os, flags);
  for (double w : cube.wavelengths) binio::put_f32(os, static_cast<float>(w));
  for (float v : cube.data) binio::put_f32(os, v);
  if (labels) {
    for (std::uint16_t l : labels->labels) binio::put_le<std::uint16_t>(os, l);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

CubeFile load_cube(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cube: " + path.string());
  binio::expect_magic(is, kCubeMagic);
  const auto version = binio::get_le<std::uint16_t>(is, "version");
  if (version != kCubeVersion) {
    throw FormatError("bad version", "unsupported cube version " + std::to_string(version));
  }
  const std::uint64_t h = binio::get_le<std::uint32_t>(is, "height");
  const std::uint64_t w = binio::get_le<std::uint32_t>(is, "width");
  const std::uint64_t b = binio::get_le<std::uint32_t>(is, "bands");
  if (h == 0 || w == 0 || b == 0) throw FormatError("bad extent", "zero cube extent");
  if (h * w > kMaxSamples || h * w * b > kMaxSamples) {
    throw FormatError("dimension overflow",
                      std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(b));
  }
  const auto flags = binio::get_le<std::uint8_t>(is, "flags");

  CubeFile out;
  HsiCube& cube = out.cube;
  cube = HsiCube(h, w, b);
  if (flags & kFlagWavelengths) {
    cube.wavelengths.resize(b);
    for (auto& wl : cube.wavelengths) wl = binio::get_f32(is, "wavelengths");
  }
  for (auto& v : cube.data) v = binio::get_f32(is, "cube data");
  if (flags & kFlagLabels) {
    LabelMap lm(h, w);
    for (auto& l : lm.labels) l = binio::get_le<std::uint16_t>(is, "labels");
    out.labels = std::move(lm);
  }
  cube.validate();
  return out;
}

}  // namespace specdet
