#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "specdet/autograd.hpp"
#include "specdet/dctma.hpp"
#include "specdet/hsio.hpp"
#include "specdet/model_config.hpp"
#include "specdet/param_store.hpp"
#include "specdet/pgte.hpp"

namespace specdet::ssplm {

/// H×W raster of per-pixel scores, row-major.
struct ScoreMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
};

/// Min-max rescaling to [0,1]; a constant map becomes all zeros.
ScoreMap minmax_normalize(const ScoreMap& map);

/// Per-pixel backbone embeddings (pixel-major, embed_width each).
std::vector<double> embed_pixels(const HsiCube& cube, const ModelConfig& cfg,
                                 const dctma::FreqPartition& partition, const ParamStore& store,
                                 std::size_t threads = 1);

/// Cosine between each pixel embedding and the prototype; zero-norm pixels score 0.
ScoreMap similarity_from_embeddings(const std::vector<double>& embeddings, std::size_t height,
                                    std::size_t width, const std::vector<double>& prototype);
ScoreMap similarity_map(const HsiCube& cube, const ModelConfig& cfg,
                        const dctma::FreqPartition& partition, const ParamStore& store,
                        const std::vector<double>& prototype, std::size_t threads = 1);

/// Detection-head probabilities for every pixel embedding.
ScoreMap head_from_embeddings(const std::vector<double>& embeddings, std::size_t height,
                              std::size_t width, const std::vector<double>& prototype,
                              const ParamStore& store);

struct PseudoLabelSets {
  std::vector<std::size_t> positive;  // pixel indices, ascending
  std::vector<std::size_t> negative;
  double tau_pos = 0;
  double tau_neg = 0;
  double q_pos = 0;
  double q_neg = 0;
};

/// τ_pos/τ_neg are linear-interpolation quantiles of the scores; a pixel is
/// positive if s > τ_pos and negative if s < τ_neg. Throws ValidationError
/// "degenerate pseudo-sets" when either set is empty.
PseudoLabelSets select_pseudo_labels(const std::vector<double>& scores, double q_pos,
                                     double q_neg);

struct AugmentConfig {
  double noise_std = 0.01;
  bool rotations = true;
  bool flips = true;
};

struct AugmentDraw {
  unsigned quarter_turns = 0;  // clockwise
  bool flip_horizontal = false;
  bool flip_vertical = false;
};

Patch rotate_quarter(const Patch& patch, unsigned quarter_turns);
Patch flip_horizontal(const Patch& patch);
Patch flip_vertical(const Patch& patch);

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t seed);
/// Rotation, then flips, then N(0, noise_std²) noise drawn from noise_seed.
Patch apply_augmentation(const Patch& patch, const AugmentDraw& draw, double noise_std,
                         std::uint64_t noise_seed);
/// One full draw: geometry and noise both derived from seed.
Patch augment(const Patch& patch, const AugmentConfig& cfg, std::uint64_t seed);

/// Class-balanced BCE: ω_i = n / (2·n_class(i)), mean of ω_i·BCE_i.
Var loss_wbce(const Var& probabilities, const std::vector<double>& labels);
/// Mean of (P(x) − P(x̃))².
Var loss_self(const Var& original, const Var& augmented);

struct TtaConfig {
  std::size_t iterations = 50;
  double eta = 0.4;
  double q_pos = 0.95;
  double q_neg = 0.05;
  std::size_t refresh_every = 10;
  OptimConfig optim;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct TtaRecord {
  std::size_t iteration = 0;
  double loss_wbce = 0;
  double loss_self = 0;
  double objective = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct TtaResult {
  ScoreMap map;  // min-max normalised detection probabilities
  ScoreMap raw;  // probabilities before normalisation
  PseudoLabelSets initial_sets;
  std::vector<TtaRecord> trace;
};

/// Namespaces held fixed during adaptation.
inline constexpr const char* kTtaFrozen[] = {"backbone/", "prior/", "align/", "cls/"};

/// Prototype of a target material from its (band-normalised) prior alone:
/// the support set is the prior tiled over a patch.
pgte::Prototype prior_prototype(const std::vector<double>& prior, double lambda,
                                const ModelConfig& cfg, const dctma::FreqPartition& partition,
                                const ParamStore& store);

/// Test-time adaptation of dctma/ and det/ on a band-normalised target cube.
/// The prototype is held fixed; pseudo-sets are rebuilt from the current
/// similarity map every refresh_every iterations.
TtaResult tta_adapt(const HsiCube& cube, const pgte::Prototype& prototype, const ModelConfig& cfg,
                    ParamStore& store, const TtaConfig& tta,
                    const std::function<void(const TtaRecord&)>& progress = {});

/// "SPHM" raster: magic, u32 height, u32 width, f32 scores.
void save_map(const ScoreMap& map, const std::filesystem::path& path);
ScoreMap load_map(const std::filesystem::path& path);
/// 16-bit binary graymap of scores clamped to [0,1].
void save_pgm(const ScoreMap& map, const std::filesystem::path& path);

}  // namespace specdet::ssplm
