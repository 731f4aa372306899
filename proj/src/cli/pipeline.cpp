#include "specdet/pipeline.hpp"

#include <chrono>

#include "specdet/rng.hpp"
#include "specdet/stats.hpp"

namespace specdet::pipeline {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<double> synthetic_prior(const RunConfig& cfg, std::uint64_t stream) {
  return smooth_spectrum(cfg.model.bands, cfg.prior.length_scale, cfg.prior.mean,
                         cfg.prior.amplitude, derive_seed(cfg.seed, stream));
}

SyntheticTarget make_target(const RunConfig& cfg) {
  SyntheticTarget t;
  t.prior = {1, synthetic_prior(cfg, kTargetPriorStream)};
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  t.scene = synth_scene(sc, {t.prior});
  return t;
}

SyntheticSource make_source(const RunConfig& cfg) {
  SyntheticSource s;
  for (std::size_t k = 0; k < cfg.source.materials; ++k) {
    s.priors.push_back({static_cast<std::uint32_t>(k + 1), synthetic_prior(cfg, k + 1)});
  }
  SynthConfig sc = cfg.synth;
  sc.seed = derive_seed(cfg.seed, kSourceSceneStream);
  sc.implant_count = cfg.source.materials * cfg.source.implants_per_material;
  s.scene = synth_scene(sc, s.priors);
  return s;
}

metatrain::SourceData build_source_data(const HsiCube& cube, const LabelMap& labels,
                                        const std::map<std::uint16_t, std::vector<double>>& priors) {
  const NormalizedCube n = normalize_bands(cube);
  metatrain::SourceData sd{n.cube, labels, {}};
  for (const auto& [id, spectrum] : priors) sd.priors[id] = apply_band_normalization(spectrum, n.stats);
  return sd;
}

metatrain::SourceData build_source_data(const SyntheticSource& source) {
  std::map<std::uint16_t, std::vector<double>> priors;
  const std::size_t c = source.scene.class_spectra.size();
  for (std::size_t k = 0; k < c; ++k) priors[static_cast<std::uint16_t>(k + 1)] = source.scene.class_spectra[k];
  for (std::size_t k = 0; k < source.priors.size(); ++k) {
    priors[static_cast<std::uint16_t>(c + 1 + k)] = source.priors[k].values;
  }
  return build_source_data(source.scene.cube, source.scene.labels, priors);
}

ParamStore meta_train(const RunConfig& cfg, const metatrain::SourceData& source,
                      std::vector<metatrain::LossRecord>* trace,
                      const metatrain::ProgressFn& progress) {
  cfg.validate();
  ParamStore store = init_parameters(cfg.model, cfg.seed);
  auto records = metatrain::meta_train_run(source, cfg.model, cfg.train, store, progress);
  if (trace) *trace = std::move(records);
  return store;
}

PreparedTarget prepare_target(const RunConfig& cfg, const HsiCube& raw_cube,
                              const std::vector<double>& raw_prior, const ParamStore& store) {
  if (raw_cube.bands != cfg.model.bands) {
    throw ValidationError("target cube has " + std::to_string(raw_cube.bands) +
                          " bands, model expects " + std::to_string(cfg.model.bands));
  }
  const NormalizedCube n = normalize_bands(raw_cube);
  PreparedTarget t;
  t.cube = n.cube;
  t.prior = apply_band_normalization(raw_prior, n.stats);
  const auto partition = dctma::build_partition(cfg.model.bands, cfg.model.rho_low, cfg.model.rho_mid);
  t.prototype = ssplm::prior_prototype(t.prior, cfg.train.lambda, cfg.model, partition, store);
  return t;
}

Detection detect(const RunConfig& cfg, const PreparedTarget& target, const ParamStore& store) {
  const auto partition = dctma::build_partition(cfg.model.bands, cfg.model.rho_low, cfg.model.rho_mid);
  const auto emb = ssplm::embed_pixels(target.cube, cfg.model, partition, store, cfg.threads);
  const std::size_t h = target.cube.height, w = target.cube.width;
  Detection d;
  d.cosine = ssplm::minmax_normalize(ssplm::similarity_from_embeddings(emb, h, w, target.prototype.vector));
  d.head = ssplm::minmax_normalize(ssplm::head_from_embeddings(emb, h, w, target.prototype.vector, store));
  return d;
}

ssplm::TtaResult adapt(const RunConfig& cfg, const PreparedTarget& target, ParamStore& store,
                       const std::function<void(const ssplm::TtaRecord&)>& progress) {
  ssplm::TtaConfig tta = cfg.tta;
  tta.seed = cfg.seed;
  tta.threads = cfg.threads;
  return ssplm::tta_adapt(target.cube, target.prototype, cfg.model, store, tta, progress);
}

std::vector<std::uint8_t> truth_mask(const ssplm::ScoreMap& truth) {
  std::vector<std::uint8_t> out(truth.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = truth.values[i] != 0.0 ? 1 : 0;
  return out;
}

evalrpt::RocReport evaluate(const ssplm::ScoreMap& map, const std::vector<std::uint8_t>& truth,
                            std::size_t grid) {
  return evalrpt::auc_suite(evalrpt::roc_curves(map.values, truth, grid));
}

SyntheticOutcome run_synthetic(const RunConfig& cfg) {
  cfg.validate();
  SyntheticOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticSource source = make_source(cfg);
  ParamStore store = meta_train(cfg, build_source_data(source), &out.trace);
  out.train_seconds = seconds_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  const SyntheticTarget target = make_target(cfg);
  const PreparedTarget prepared = prepare_target(cfg, target.scene.cube, target.prior.values, store);
  const std::vector<std::uint8_t> truth(target.scene.implant_mask.begin(),
                                        target.scene.implant_mask.end());
  const Detection d = detect(cfg, prepared, store);
  out.cosine = evaluate(d.cosine, truth, cfg.grid);
  out.unadapted = evaluate(d.head, truth, cfg.grid);
  const ssplm::TtaResult r = adapt(cfg, prepared, store);
  out.adapted_map = r.map;
  out.adapted = evaluate(r.map, truth, cfg.grid);
  out.adapt_seconds = seconds_since(t1);
  return out;
}

ModelConfig audit_model() {
  ModelConfig m;
  m.bands = 16;
  m.patch_side = 3;
  m.group_width = 16;
  m.adapter_width = 16;
  m.state_size = 4;
  m.embed_width = 16;
  m.heads = 2;
  m.blocks = 1;
  m.ffn_width = 16;
  m.prior_hidden = 16;
  m.ways = 3;
  // Smooth everywhere so central differences are a valid oracle.
  m.group_activation = Activation::kSoftplus;
  m.hidden_activation = Activation::kSoftplus;
  return m;
}

std::vector<NamespaceAudit> gradient_audit(const ModelConfig& model, std::size_t coordinates,
                                           std::uint64_t seed, double step_scale) {
  model.validate();
  SynthConfig sc;
  sc.height = 12;
  sc.width = 12;
  sc.bands = model.bands;
  sc.background_classes = model.ways;
  sc.implant_count = 8;
  sc.seed = seed;
  const SpectralPrior prior{1, smooth_spectrum(model.bands, 4.0, 0.45, 0.12, derive_seed(seed, 1))};
  const SynthScene scene = synth_scene(sc, {prior});
  const NormalizedCube n = normalize_bands(scene.cube);

  metatrain::TrainConfig train;
  train.ways = model.ways;
  train.shots = 2;
  train.queries = 3 * model.ways;
  const Episode ep =
      sample_episode(n.cube, scene.labels, train.ways, train.shots, train.queries,
                     derive_seed(seed, 0xE9), model.patch_side);
  const std::size_t target = 0;
  const auto target_prior = apply_band_normalization(scene.class_spectra[ep.classes[target] - 1], n.stats);

  const ParamStore store = init_parameters(model, seed);
  const auto partition = dctma::build_partition(model.bands, model.rho_low, model.rho_mid);

  metatrain::QueryPseudoLabels fixed;
  {
    ParamScope scope(store);
    fixed = metatrain::episode_losses(ep, target, target_prior, model, partition, train, scope).pseudo;
  }
  const LossBuilder fn = [&](ParamScope& scope) {
    return metatrain::episode_losses(ep, target, target_prior, model, partition, train, scope, fixed)
        .total;
  };

  std::vector<NamespaceAudit> out;
  for (const char* prefix : kNamespaces) {
    FdOptions opts;
    opts.coordinates = coordinates;
    opts.prefix = prefix;
    opts.step_scale = step_scale;
    opts.seed = derive_seed(seed, out.size() + 1);
    out.push_back({prefix, finite_difference_check(fn, store, opts)});
  }
  return out;
}

}  // namespace specdet::pipeline
