#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specdet/autograd.hpp"
#include "specdet/dctma.hpp"
#include "specdet/hsio.hpp"
#include "specdet/model_config.hpp"
#include "specdet/param_store.hpp"

namespace specdet::metatrain {

/// Clamp applied to probabilities before logarithms.
inline constexpr double kProbClamp = 1e-7;

/// Mean cross-entropy of row-wise logits (n × N) against 0-based labels.
Var loss_cl(const Var& logits, const std::vector<std::size_t>& labels);

/// Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 − 1e-7].
Var loss_de(const Var& probabilities, const std::vector<double>& targets);

/// Loss_cl + β·Loss_de + γ·L_phy.
Var total_loss(const Var& cl, const Var& de, const Var& phy, double beta, double gamma);

/// Detection logit w_detᵀ(ê ⊙ p̂) + b: the head scores the agreement between
/// the normalised embedding and the normalised prototype, so one set of
/// weights serves every target material.
Var detection_logit(const Var& embedding, const Var& prototype, ParamScope& scope);
Var detection_probability(const Var& embedding, const Var& prototype, ParamScope& scope);

struct TrainConfig {
  std::size_t iterations = 10000;
  std::size_t episodes_per_batch = 32;
  std::size_t ways = 10;
  std::size_t shots = 2;
  std::size_t queries = 20;  // query samples per episode, split across classes
  double beta = 1.0;
  double gamma = 0.1;
  double lambda = 0.7;
  double q_pos = 0.9;  // pseudo-label quantiles on the query set
  double q_neg = 0.1;
  OptimConfig optim;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::string> frozen_prefixes;

  void validate() const;
};

/// Band-normalised source scene plus per-class reference spectra (already
/// normalised with the scene's band statistics).
struct SourceData {
  HsiCube cube;
  LabelMap labels;
  std::map<std::uint16_t, std::vector<double>> priors;
};

/// Mean spectrum of every labelled pixel of one class.
std::vector<double> class_mean_spectrum(const HsiCube& cube, const LabelMap& labels,
                                        std::uint16_t class_id);

/// Binary pseudo-labels on a query set: indices with cosine strictly above
/// the q_pos quantile are positive, strictly below the q_neg quantile negative.
struct QueryPseudoLabels {
  std::vector<std::size_t> index;
  std::vector<double> label;
};

struct EpisodeLosses {
  Var cl;
  Var de;
  Var phy;
  Var total;
  std::size_t target_local = 0;
  QueryPseudoLabels pseudo;
};

/// Builds all episode losses in one graph. The pseudo-target is the episode
/// class at `target_local`; its support and prior give the prototype. When
/// `fixed` is given those pseudo-labels are used instead of being recomputed.
EpisodeLosses episode_losses(const Episode& episode, std::size_t target_local,
                             const std::vector<double>& target_prior, const ModelConfig& cfg,
                             const dctma::FreqPartition& partition, const TrainConfig& train,
                             ParamScope& scope,
                             const std::optional<QueryPseudoLabels>& fixed = std::nullopt);

struct LossRecord {
  std::size_t iteration = 0;
  double loss_cl = 0;
  double loss_de = 0;
  double loss_phy = 0;
  double loss_total = 0;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Episodic training: per iteration a batch of episodes is drawn, their
/// gradients are averaged in episode order and one AdamW step is taken.
/// Entries under cfg.frozen_prefixes are frozen before the first step.
std::vector<LossRecord> meta_train_run(const SourceData& source, const ModelConfig& cfg,
                                       const TrainConfig& train, ParamStore& store,
                                       const ProgressFn& progress = {});

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path);

}  // namespace specdet::metatrain
