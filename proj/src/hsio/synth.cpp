#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>

#include "specdet/hsio.hpp"
#include "specdet/rng.hpp"

namespace specdet {

namespace {

Eigen::MatrixXd band_cholesky(std::size_t bands, double length_scale) {
  const auto n = static_cast<Eigen::Index>(bands);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      k(i, j) = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
    k(i, i) += 1e-6;
  }
  return Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
}

std::vector<double> correlated_draw(const Eigen::MatrixXd& chol, Rng& rng) {
  const Eigen::Index n = chol.rows();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  const Eigen::VectorXd x = chol * z;
  return {x.data(), x.data() + n};
}

}  // namespace

void SynthConfig::validate() const {
  if (height == 0 || width == 0 || bands == 0) throw ValidationError("synth extents must be >= 1");
  if (background_classes == 0) throw ValidationError("need at least one background class");
  if (!(length_scale > 0)) throw ValidationError("length_scale must be > 0");
  if (!(0 <= alpha_min && alpha_min <= alpha_max && alpha_max <= 1)) {
    throw ValidationError("abundance range must satisfy 0 <= alpha_min <= alpha_max <= 1");
  }
  if (implant_count >= height * width) throw ValidationError("implant count must be < H*W");
  if (noise_std < 0 || within_class_std < 0) throw ValidationError("noise levels must be >= 0");
  if (regions_per_class == 0) throw ValidationError("regions_per_class must be >= 1");
}

std::vector<double> smooth_spectrum(std::size_t bands, double length_scale, double mean,
                                    double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  auto x = correlated_draw(band_cholesky(bands, length_scale), rng);
  for (double& v : x) v = static_cast<double>(static_cast<float>(mean + amplitude * v));
  return x;
}

SynthScene synth_scene(const SynthConfig& cfg, const std::vector<SpectralPrior>& priors) {
  cfg.validate();
  if (priors.empty()) throw ValidationError("synth_scene needs at least one prior");
  for (const auto& p : priors) {
    if (p.values.size() != cfg.bands) throw ValidationError("prior length != band count");
  }
  const std::size_t H = cfg.height, W = cfg.width, B = cfg.bands, C = cfg.background_classes;
  Rng rng(cfg.seed);
  const Eigen::MatrixXd chol = band_cholesky(B, cfg.length_scale);

  SynthScene scene;
  scene.cube = HsiCube(H, W, B);
  scene.labels = LabelMap(H, W);
  scene.implant_mask.assign(H * W, 0);
  scene.abundances.assign(H * W, 0.0);
  scene.cube.wavelengths.resize(B);
  for (std::size_t k = 0; k < B; ++k) {
    const double wl = B == 1 ? 400.0 : 400.0 + 2100.0 * static_cast<double>(k) / static_cast<double>(B - 1);
    scene.cube.wavelengths[k] = static_cast<float>(wl);
  }

  for (std::size_t c = 0; c < C; ++c) {
    scene.class_spectra.push_back(
        smooth_spectrum(B, cfg.length_scale, 0.45, 0.12, derive_seed(cfg.seed, 0xC1A55, c)));
  }

  // Voronoi layout: regions_per_class seeds per class, nearest seed wins.
  const std::size_t n_centers = C * cfg.regions_per_class;
  std::vector<std::pair<double, double>> centers(n_centers);
  for (auto& ctr : centers) {
    ctr.first = rng.uniform(0.0, static_cast<double>(H));
    ctr.second = rng.uniform(0.0, static_cast<double>(W));
  }
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      std::size_t best = 0;
      double best_d = 0;
      for (std::size_t k = 0; k < n_centers; ++k) {
        const double di = static_cast<double>(i) + 0.5 - centers[k].first;
        const double dj = static_cast<double>(j) + 0.5 - centers[k].second;
        const double d = di * di + dj * dj;
        if (k == 0 || d < best_d) {
          best = k;
          best_d = d;
        }
      }
      scene.labels.labels[i * W + j] = static_cast<std::uint16_t>(best % C + 1);
    }
  }

  std::vector<std::vector<double>> background(H * W);
  for (std::size_t p = 0; p < H * W; ++p) {
    const auto& curve = scene.class_spectra[scene.labels.labels[p] - 1];
    auto var = correlated_draw(chol, rng);
    background[p].resize(B);
    for (std::size_t b = 0; b < B; ++b) background[p][b] = curve[b] + cfg.within_class_std * var[b];
  }

  std::vector<std::size_t> order(H * W);
  for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
  rng.shuffle(order);
  std::vector<double> pixel(B);
  for (std::size_t k = 0; k < cfg.implant_count; ++k) {
    const std::size_t p = order[k];
    const std::size_t which = k % priors.size();
    const double alpha = cfg.alpha_min == cfg.alpha_max ? cfg.alpha_min
                                                        : rng.uniform(cfg.alpha_min, cfg.alpha_max);
    const auto& t = priors[which].values;
    for (std::size_t b = 0; b < B; ++b) {
      background[p][b] = alpha * t[b] + (1.0 - alpha) * background[p][b];
    }
    scene.implant_mask[p] = 1;
    scene.abundances[p] = alpha;
    scene.labels.labels[p] = static_cast<std::uint16_t>(C + 1 + which);
  }

  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t b = 0; b < B; ++b) {
      const double noise = cfg.noise_std > 0 ? cfg.noise_std * rng.normal() : 0.0;
      scene.cube.data[p * B + b] = static_cast<float>(background[p][b] + noise);
    }
  }
  return scene;
}

}  // namespace specdet
