#include <algorithm>
#include <limits>

#include "specdet/hsio.hpp"

namespace specdet {

NormalizedCube normalize_bands(const HsiCube& cube) {
  cube.validate();
  NormalizedCube out{cube, {}};
  const std::size_t B = cube.bands;
  out.stats.min.assign(B, std::numeric_limits<double>::infinity());
  out.stats.max.assign(B, -std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    for (std::size_t b = 0; b < B; ++b) {
      const double v = cube.data[p * B + b];
      out.stats.min[b] = std::min(out.stats.min[b], v);
      out.stats.max[b] = std::max(out.stats.max[b], v);
    }
  }
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    for (std::size_t b = 0; b < B; ++b) {
      const double range = out.stats.max[b] - out.stats.min[b];
      const double v = cube.data[p * B + b];
      out.cube.data[p * B + b] =
          range > 0 ? static_cast<float>((v - out.stats.min[b]) / range) : 0.0f;
    }
  }
  return out;
}

std::vector<double> apply_band_normalization(const std::vector<double>& spectrum,
                                             const BandStats& stats) {
  if (spectrum.size() != stats.min.size()) {
    throw ValidationError("spectrum length " + std::to_string(spectrum.size()) +
                          " != band count " + std::to_string(stats.min.size()));
  }
  std::vector<double> out(spectrum.size());
  for (std::size_t b = 0; b < spectrum.size(); ++b) {
    const double range = stats.max[b] - stats.min[b];
    out[b] = range > 0 ? (spectrum[b] - stats.min[b]) / range : 0.0;
  }
  return out;
}

std::size_t mirror_index(std::ptrdiff_t idx, std::size_t n) noexcept {
  if (n <= 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = idx % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

Patch extract_patch(const HsiCube& cube, std::size_t row, std::size_t col, std::size_t side) {
  if (side % 2 == 0) throw ValidationError("patch side must be odd, got " + std::to_string(side));
  if (row >= cube.height || col >= cube.width) throw ValidationError("patch center out of bounds");
  Patch p;
  p.row = row;
  p.col = col;
  p.side = side;
  p.bands = cube.bands;
  p.values.resize(side * side * cube.bands);
  const auto half = static_cast<std::ptrdiff_t>(side / 2);
  for (std::size_t di = 0; di < side; ++di) {
    const std::size_t r =
        mirror_index(static_cast<std::ptrdiff_t>(row) + static_cast<std::ptrdiff_t>(di) - half,
                     cube.height);
    for (std::size_t dj = 0; dj < side; ++dj) {
      const std::size_t c =
          mirror_index(static_cast<std::ptrdiff_t>(col) + static_cast<std::ptrdiff_t>(dj) - half,
                       cube.width);
      const float* src = cube.data.data() + cube.offset(r, c);
      std::copy(src, src + cube.bands, p.values.begin() + (di * side + dj) * cube.bands);
    }
  }
  return p;
}

Patch tiled_patch(const std::vector<double>& spectrum, std::size_t side) {
  if (side % 2 == 0) throw ValidationError("patch side must be odd");
  Patch p;
  p.side = side;
  p.bands = spectrum.size();
  p.values.reserve(side * side * spectrum.size());
  for (std::size_t t = 0; t < side * side; ++t) {
    p.values.insert(p.values.end(), spectrum.begin(), spectrum.end());
  }
  return p;
}

}  // namespace specdet
