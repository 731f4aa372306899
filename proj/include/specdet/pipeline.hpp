#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "specdet/evalrpt.hpp"
#include "specdet/run_config.hpp"

namespace specdet::pipeline {

/// Seed streams for the synthetic scenes, derived from RunConfig::seed.
inline constexpr std::uint64_t kTargetPriorStream = 0x7A7;
inline constexpr std::uint64_t kSourceSceneStream = 0x5AC;

std::vector<double> synthetic_prior(const RunConfig& cfg, std::uint64_t stream);

struct SyntheticTarget {
  SynthScene scene;
  SpectralPrior prior;  // raw (unnormalised) reference spectrum
};
SyntheticTarget make_target(const RunConfig& cfg);

/// Source scene with the same background model and `source.materials`
/// implanted materials; class ids 1..C background, C+1.. materials.
struct SyntheticSource {
  SynthScene scene;
  std::vector<SpectralPrior> priors;  // one per material, raw
};
SyntheticSource make_source(const RunConfig& cfg);

/// Normalises the cube and every reference spectrum with the cube's band stats.
metatrain::SourceData build_source_data(const HsiCube& cube, const LabelMap& labels,
                                        const std::map<std::uint16_t, std::vector<double>>& priors);
/// Synthetic source: background curves and material priors are both known.
metatrain::SourceData build_source_data(const SyntheticSource& source);

ParamStore meta_train(const RunConfig& cfg, const metatrain::SourceData& source,
                      std::vector<metatrain::LossRecord>* trace = nullptr,
                      const metatrain::ProgressFn& progress = {});

/// Band-normalised cube and prior, plus the prior-only prototype.
struct PreparedTarget {
  HsiCube cube;
  std::vector<double> prior;
  pgte::Prototype prototype;
};
PreparedTarget prepare_target(const RunConfig& cfg, const HsiCube& raw_cube,
                              const std::vector<double>& raw_prior, const ParamStore& store);

struct Detection {
  ssplm::ScoreMap cosine;  // normalised cosine-similarity baseline
  ssplm::ScoreMap head;    // normalised un-adapted detection head
};
Detection detect(const RunConfig& cfg, const PreparedTarget& target, const ParamStore& store);

ssplm::TtaResult adapt(const RunConfig& cfg, const PreparedTarget& target, ParamStore& store,
                       const std::function<void(const ssplm::TtaRecord&)>& progress = {});

std::vector<std::uint8_t> truth_mask(const ssplm::ScoreMap& truth);
evalrpt::RocReport evaluate(const ssplm::ScoreMap& map, const std::vector<std::uint8_t>& truth,
                            std::size_t grid);

/// Synthesise, meta-train, detect, adapt and score one seed.
struct SyntheticOutcome {
  evalrpt::RocReport cosine;
  evalrpt::RocReport unadapted;
  evalrpt::RocReport adapted;
  ssplm::ScoreMap adapted_map;
  std::vector<metatrain::LossRecord> trace;
  double train_seconds = 0;
  double adapt_seconds = 0;
};
SyntheticOutcome run_synthetic(const RunConfig& cfg);

/// Toy model for gradient audits: B=16, s=3, every width 16.
ModelConfig audit_model();

struct NamespaceAudit {
  std::string prefix;
  FdReport report;
};
/// Central-difference audit of L_total on one episode, `coordinates` samples
/// in each namespace. Pseudo-labels are chosen once, then held fixed.
std::vector<NamespaceAudit> gradient_audit(const ModelConfig& model, std::size_t coordinates,
                                           std::uint64_t seed, double step_scale = 1e-3);

}  // namespace specdet::pipeline
