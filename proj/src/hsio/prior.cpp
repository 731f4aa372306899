#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "specdet/hsio.hpp"

namespace specdet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || trim(text.substr(used)) != "" || !std::isfinite(v)) {
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": not a number: '" +
                          text + "'");
  }
  return v;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

}  // namespace

SpectralPrior load_prior(const std::filesystem::path& path, std::size_t band_count,
                         const std::vector<double>& target_wavelengths) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prior file: " + path.string());
  std::vector<double> wl;
  std::vector<double> vals;
  int paired = -1;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const int is_pair = comma != std::string::npos ? 1 : 0;
    if (paired >= 0 && paired != is_pair) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": mixes paired and bare values");
    }
    paired = is_pair;
    if (is_pair) {
      wl.push_back(parse_number(trim(line.substr(0, comma)), path, line_no));
      vals.push_back(parse_number(trim(line.substr(comma + 1)), path, line_no));
    } else {
      vals.push_back(parse_number(line, path, line_no));
    }
  }
  if (vals.empty()) throw ValidationError("prior file has no samples: " + path.string());
  for (std::size_t k = 1; k < wl.size(); ++k) {
    if (!(wl[k] > wl[k - 1])) {
      throw ValidationError("non-monotone wavelengths in prior file " + path.string());
    }
  }

  SpectralPrior prior;
  if (vals.size() == band_count) {
    prior.values = std::move(vals);
    return prior;
  }
  if (vals.size() < 2) {
    throw ValidationError("prior needs at least 2 samples to resample onto " +
                          std::to_string(band_count) + " bands");
  }
  if (wl.empty()) {
    wl.resize(vals.size());
    for (std::size_t k = 0; k < wl.size(); ++k) wl[k] = static_cast<double>(k);
  }
  std::vector<double> grid = target_wavelengths;
  if (!grid.empty() && grid.size() != band_count) {
    throw ValidationError("target wavelength count != band count");
  }
  if (grid.empty()) {
    grid.resize(band_count);
    for (std::size_t k = 0; k < band_count; ++k) {
      grid[k] = band_count == 1
                    ? wl.front()
                    : wl.front() + (wl.back() - wl.front()) * static_cast<double>(k) /
                                       static_cast<double>(band_count - 1);
    }
  }
  prior.values.resize(band_count);
  for (std::size_t k = 0; k < band_count; ++k) prior.values[k] = interpolate(wl, vals, grid[k]);
  return prior;
}

void save_prior(const SpectralPrior& prior, const std::filesystem::path& path,
                const std::vector<double>& wavelengths) {
  if (!wavelengths.empty() && wavelengths.size() != prior.values.size()) {
    throw ValidationError("wavelength count != prior length");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "# material " << prior.material_id << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < prior.values.size(); ++k) {
    if (!wavelengths.empty()) os << wavelengths[k] << ',';
    os << prior.values[k] << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace specdet
