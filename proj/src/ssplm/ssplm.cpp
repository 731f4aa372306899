#include "specdet/ssplm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "specdet/binary_io.hpp"
#include "specdet/metatrain.hpp"
#include "specdet/parallel.hpp"
#include "specdet/rng.hpp"
#include "specdet/stats.hpp"

namespace specdet::ssplm {

ScoreMap minmax_normalize(const ScoreMap& map) {
  ScoreMap out = map;
  if (map.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  for (double& v : out.values) v = span > 0 ? (v - lo) / span : 0.0;
  return out;
}

std::vector<double> embed_pixels(const HsiCube& cube, const ModelConfig& cfg,
                                 const dctma::FreqPartition& partition, const ParamStore& store,
                                 std::size_t threads) {
  const std::size_t de = cfg.embed_width;
  std::vector<double> out(cube.pixels() * de);
  parallel_for(cube.pixels(), threads, [&](std::size_t p) {
    const Patch patch = extract_patch(cube, p / cube.width, p % cube.width, cfg.patch_side);
    ParamScope scope(store);
    const Var e = pgte::embed(patch, cfg, partition, scope).e;
    std::copy(e->value.data(), e->value.data() + de, out.begin() + static_cast<std::ptrdiff_t>(p * de));
  });
  return out;
}

ScoreMap similarity_from_embeddings(const std::vector<double>& embeddings, std::size_t height,
                                    std::size_t width, const std::vector<double>& prototype) {
  double norm = 0;
  for (double v : prototype) norm += v * v;
  if (!(norm > 0)) throw ValidationError("similarity_map: prototype has zero norm");
  const std::size_t de = prototype.size();
  if (embeddings.size() != height * width * de) {
    throw ValidationError("similarity_map: embedding table does not match the raster");
  }
  ScoreMap map{height, width, std::vector<double>(height * width)};
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    map.values[p] = cosine_similarity(embeddings.data() + p * de, prototype.data(), de);
  }
  return map;
}

ScoreMap similarity_map(const HsiCube& cube, const ModelConfig& cfg,
                        const dctma::FreqPartition& partition, const ParamStore& store,
                        const std::vector<double>& prototype, std::size_t threads) {
  return similarity_from_embeddings(embed_pixels(cube, cfg, partition, store, threads),
                                    cube.height, cube.width, prototype);
}

ScoreMap head_from_embeddings(const std::vector<double>& embeddings, std::size_t height,
                              std::size_t width, const std::vector<double>& prototype,
                              const ParamStore& store) {
  const std::size_t de = prototype.size();
  if (embeddings.size() != height * width * de) {
    throw ValidationError("detection head: embedding table does not match the raster");
  }
  ScoreMap map{height, width, std::vector<double>(height * width)};
  const Var proto = constant(Tensor::vector(prototype));
  ParamScope scope(store);
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    std::vector<double> e(embeddings.begin() + static_cast<std::ptrdiff_t>(p * de),
                          embeddings.begin() + static_cast<std::ptrdiff_t>((p + 1) * de));
    map.values[p] =
        metatrain::detection_probability(constant(Tensor::vector(std::move(e))), proto, scope)
            ->value.item();
  }
  return map;
}

PseudoLabelSets select_pseudo_labels(const std::vector<double>& scores, double q_pos,
                                     double q_neg) {
  if (scores.empty()) throw ValidationError("select_pseudo_labels: empty score map");
  if (!(q_neg >= 0 && q_neg < q_pos && q_pos <= 1)) {
    throw ValidationError("pseudo-label quantiles must satisfy 0 <= q_neg < q_pos <= 1");
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  PseudoLabelSets sets;
  sets.q_pos = q_pos;
  sets.q_neg = q_neg;
  sets.tau_pos = quantile_sorted(sorted, q_pos);
  sets.tau_neg = quantile_sorted(sorted, q_neg);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > sets.tau_pos) {
      sets.positive.push_back(i);
    } else if (scores[i] < sets.tau_neg) {
      sets.negative.push_back(i);
    }
  }
  if (sets.positive.empty() || sets.negative.empty()) {
    throw ValidationError("degenerate pseudo-sets");
  }
  return sets;
}

namespace {

template <typename Map>
Patch remap(const Patch& patch, Map&& src) {
  Patch out = patch;
  const std::size_t s = patch.side;
  const std::size_t B = patch.bands;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const auto [si, sj] = src(i, j);
      std::copy_n(patch.values.begin() + static_cast<std::ptrdiff_t>((si * s + sj) * B), B,
                  out.values.begin() + static_cast<std::ptrdiff_t>((i * s + j) * B));
    }
  return out;
}

}  // namespace

Patch rotate_quarter(const Patch& patch, unsigned quarter_turns) {
  Patch out = patch;
  const std::size_t last = patch.side - 1;
  for (unsigned k = 0; k < quarter_turns % 4; ++k) {
    out = remap(out, [last](std::size_t i, std::size_t j) { return std::pair{last - j, i}; });
  }
  return out;
}

Patch flip_horizontal(const Patch& patch) {
  const std::size_t last = patch.side - 1;
  return remap(patch, [last](std::size_t i, std::size_t j) { return std::pair{i, last - j}; });
}

Patch flip_vertical(const Patch& patch) {
  const std::size_t last = patch.side - 1;
  return remap(patch, [last](std::size_t i, std::size_t j) { return std::pair{last - i, j}; });
}

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xA06));
  AugmentDraw d;
  if (cfg.rotations) d.quarter_turns = static_cast<unsigned>(rng.below(4));
  if (cfg.flips) {
    d.flip_horizontal = rng.coin();
    d.flip_vertical = rng.coin();
  }
  return d;
}

Patch apply_augmentation(const Patch& patch, const AugmentDraw& draw, double noise_std,
                         std::uint64_t noise_seed) {
  if (noise_std < 0) throw ValidationError("augmentation noise std must be >= 0");
  Patch out = rotate_quarter(patch, draw.quarter_turns);
  if (draw.flip_horizontal) out = flip_horizontal(out);
  if (draw.flip_vertical) out = flip_vertical(out);
  if (noise_std > 0) {
    Rng rng(noise_seed);
    for (double& v : out.values) v += noise_std * rng.normal();
  }
  return out;
}

Patch augment(const Patch& patch, const AugmentConfig& cfg, std::uint64_t seed) {
  return apply_augmentation(patch, draw_augmentation(cfg, seed), cfg.noise_std,
                            derive_seed(seed, 0x401CE));
}

namespace {

std::vector<double> balance_weights(const std::vector<double>& labels) {
  std::size_t pos = 0;
  for (double y : labels) pos += y > 0.5 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("loss_wbce: both pseudo-classes must be non-empty");
  const double n = static_cast<double>(labels.size());
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w[i] = n / (2.0 * static_cast<double>(labels[i] > 0.5 ? pos : neg));
  }
  return w;
}

}  // namespace

Var loss_wbce(const Var& probabilities, const std::vector<double>& labels) {
  const std::size_t n = probabilities->value.size();
  if (labels.size() != n) throw ValidationError("loss_wbce: one label per probability required");
  const auto w = balance_weights(labels);
  const std::vector<std::size_t> flat = {n};
  Tensor wy(flat), wn(flat);
  for (std::size_t i = 0; i < n; ++i) {
    wy[i] = w[i] * labels[i];
    wn[i] = w[i] * (1.0 - labels[i]);
  }
  Var p = ops::reshape(probabilities, flat);
  const double lo = metatrain::kProbClamp;
  const double hi = 1.0 - metatrain::kProbClamp;
  Var ll = ops::add(ops::mul(constant(wy), ops::clamped_log(p, lo, hi)),
                    ops::mul(constant(wn), ops::clamped_log(ops::add_scalar(ops::scale(p, -1.0), 1.0), lo, hi)));
  return ops::scale(ops::sum(ll), -1.0 / static_cast<double>(n));
}

Var loss_self(const Var& original, const Var& augmented) {
  const std::size_t n = original->value.size();
  if (n == 0 || augmented->value.size() != n) {
    throw ValidationError("loss_self: paired predictions must have equal non-zero length");
  }
  const std::vector<std::size_t> flat = {n};
  return ops::mean(ops::square(ops::sub(ops::reshape(original, flat), ops::reshape(augmented, flat))));
}

void TtaConfig::validate() const {
  if (!(q_neg >= 0 && q_neg < q_pos && q_pos <= 1)) {
    throw ValidationError("pseudo-label quantiles must satisfy 0 <= q_neg < q_pos <= 1");
  }
  if (eta < 0) throw ValidationError("eta must be >= 0");
  if (refresh_every == 0) throw ValidationError("refresh_every must be >= 1");
  if (augment.noise_std < 0) throw ValidationError("augmentation noise std must be >= 0");
  optim.validate();
}

pgte::Prototype prior_prototype(const std::vector<double>& prior, double lambda,
                                const ModelConfig& cfg, const dctma::FreqPartition& partition,
                                const ParamStore& store) {
  ParamScope scope(store);
  const Var e_prior = pgte::prior_encode(prior, cfg, scope);
  const auto& v = e_prior->value.storage();
  return pgte::rectify_prototype({tiled_patch(prior, cfg.patch_side)}, v, lambda, cfg, partition,
                                 store);
}

TtaResult tta_adapt(const HsiCube& cube, const pgte::Prototype& prototype, const ModelConfig& cfg,
                    ParamStore& store, const TtaConfig& tta,
                    const std::function<void(const TtaRecord&)>& progress) {
  tta.validate();
  cfg.validate();
  cube.validate();
  if (cube.bands != cfg.bands) throw ValidationError("target cube band count does not match model");
  if (prototype.vector.size() != cfg.embed_width) {
    throw ValidationError("prototype width does not match the embedding width");
  }
  store.reset_optimizer_state();
  for (const char* ns : kTtaFrozen) store.set_frozen_prefix(ns, true);
  store.set_frozen_prefix("dctma/", false);
  store.set_frozen_prefix("det/", false);

  const auto partition = dctma::build_partition(cfg.bands, cfg.rho_low, cfg.rho_mid);
  const std::vector<double>& proto = prototype.vector;
  const std::size_t H = cube.height, W = cube.width;

  TtaResult result;
  std::vector<double> emb = embed_pixels(cube, cfg, partition, store, tta.threads);
  PseudoLabelSets sets =
      select_pseudo_labels(similarity_from_embeddings(emb, H, W, proto).values, tta.q_pos, tta.q_neg);
  result.initial_sets = sets;
  const Var proto_var = constant(Tensor::vector(proto));

  for (std::size_t it = 0; it < tta.iterations; ++it) {
    if (it > 0 && it % tta.refresh_every == 0) {
      emb = embed_pixels(cube, cfg, partition, store, tta.threads);
      try {
        sets = select_pseudo_labels(similarity_from_embeddings(emb, H, W, proto).values, tta.q_pos,
                                    tta.q_neg);
      } catch (const ValidationError&) {
        // keep the previous sets when the refreshed map collapses
      }
    }
    std::vector<std::size_t> omega = sets.positive;
    omega.insert(omega.end(), sets.negative.begin(), sets.negative.end());
    std::sort(omega.begin(), omega.end());
    std::vector<double> labels(omega.size());
    for (std::size_t k = 0; k < omega.size(); ++k) {
      labels[k] = std::binary_search(sets.positive.begin(), sets.positive.end(), omega[k]) ? 1.0 : 0.0;
    }
    const auto weights = balance_weights(labels);
    const double inv_n = 1.0 / static_cast<double>(omega.size());

    std::vector<Gradients> grads(omega.size());
    std::vector<double> bce_part(omega.size()), self_part(omega.size());
    parallel_for(omega.size(), tta.threads, [&](std::size_t k) {
      const std::size_t p = omega[k];
      const Patch patch = extract_patch(cube, p / W, p % W, cfg.patch_side);
      const Patch aug = augment(patch, tta.augment, derive_seed(tta.seed, it, p));
      ParamScope scope(store);
      Var prob = metatrain::detection_probability(pgte::embed(patch, cfg, partition, scope).e,
                                                  proto_var, scope);
      Var prob_aug = metatrain::detection_probability(pgte::embed(aug, cfg, partition, scope).e,
                                                      proto_var, scope);
      Var bce = metatrain::loss_de(ops::reshape(prob, {1}), {labels[k]});
      Var diff = ops::square(ops::sub(prob, prob_aug));
      Var term = ops::scale(ops::add(ops::scale(bce, weights[k]), ops::scale(diff, tta.eta)), inv_n);
      backward(term);
      grads[k] = scope.gradients();
      bce_part[k] = weights[k] * bce->value.item() * inv_n;
      self_part[k] = diff->value.item() * inv_n;
    });

    TtaRecord rec;
    rec.iteration = it;
    rec.positives = sets.positive.size();
    rec.negatives = sets.negative.size();
    Gradients total;
    for (std::size_t k = 0; k < omega.size(); ++k) {
      total.add_scaled(grads[k]);
      rec.loss_wbce += bce_part[k];
      rec.loss_self += self_part[k];
    }
    rec.objective = rec.loss_wbce + tta.eta * rec.loss_self;
    store.set_gradients(total);
    adamw_update(store, tta.optim);
    result.trace.push_back(rec);
    if (progress) progress(rec);
  }

  if (tta.iterations > 0) emb = embed_pixels(cube, cfg, partition, store, tta.threads);
  result.raw = head_from_embeddings(emb, H, W, proto, store);
  result.map = minmax_normalize(result.raw);
  return result;
}

void save_map(const ScoreMap& map, const std::filesystem::path& path) {
  if (map.values.size() != map.height * map.width) throw ValidationError("score map extents mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write map: " + path.string());
  os.write("SPHM", 4);
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.height));
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.width));
  for (double v : map.values) binio::put_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("failed writing map: " + path.string());
}

ScoreMap load_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open map: " + path.string());
  binio::expect_magic(is, "SPHM");
  ScoreMap map;
  map.height = binio::get_le<std::uint32_t>(is, "height");
  map.width = binio::get_le<std::uint32_t>(is, "width");
  if (map.height == 0 || map.width == 0) throw FormatError("bad extent", path.string());
  if (static_cast<std::uint64_t>(map.height) * map.width > (std::uint64_t{1} << 31)) {
    throw FormatError("dimension overflow", path.string());
  }
  map.values.resize(map.height * map.width);
  for (double& v : map.values) v = binio::get_f32(is, "scores");
  return map;
}

void save_pgm(const ScoreMap& map, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write graymap: " + path.string());
  os << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  for (double v : map.values) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};
    os.write(bytes, 2);
  }
  if (!os) throw std::runtime_error("failed writing graymap: " + path.string());
}

}  // namespace specdet::ssplm
