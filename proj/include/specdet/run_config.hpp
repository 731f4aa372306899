#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "specdet/hsio.hpp"
#include "specdet/metatrain.hpp"
#include "specdet/model_config.hpp"
#include "specdet/ssplm.hpp"

namespace specdet {

/// Shape of the synthetic source scene used for meta-training: the target
/// scene's background model plus `materials` implanted reference spectra.
struct SourceConfig {
  std::size_t materials = 6;
  std::size_t implants_per_material = 12;
};

/// Generator of random reference spectra for synthetic runs.
struct PriorGenConfig {
  double length_scale = 4.0;
  double mean = 0.45;
  double amplitude = 0.12;
};

/// Every setting of a run. Keys are dotted ("train.lr", "model.patch_side").
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  ModelConfig model;
  metatrain::TrainConfig train;
  ssplm::TtaConfig tta;
  SynthConfig synth;
  SourceConfig source;
  PriorGenConfig prior;
  std::size_t grid = 1000;

  RunConfig();

  /// Module-level checks plus cross-field consistency.
  void validate() const;

  /// Sets one field from text. Unknown keys and unparsable values throw
  /// ValidationError. Seeds of the owned sub-configs follow `seed`.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  static const std::vector<std::string>& keys();

  /// Canonical "key = value" text, one line per key, in keys() order.
  std::string serialize() const;
};

/// Parses key=value lines. '#' starts a comment; "include <path>" pulls in
/// another file relative to the including one. Later lines win. Keys that
/// were assigned are added to `assigned` when given.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path,
                       std::set<std::string>* assigned = nullptr);
void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::filesystem::path& base_dir = {},
                       std::set<std::string>* assigned = nullptr);

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace specdet
