#include "specdet/metatrain.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "specdet/parallel.hpp"
#include "specdet/pgte.hpp"
#include "specdet/rng.hpp"
#include "specdet/stats.hpp"

namespace specdet::metatrain {

Var loss_cl(const Var& logits, const std::vector<std::size_t>& labels) {
  const std::size_t n = logits->value.rows();
  const std::size_t ways = logits->value.cols();
  if (n == 0 || labels.size() != n) throw ValidationError("loss_cl: one label per logit row required");
  for (std::size_t y : labels) {
    if (y >= ways) {
      throw ValidationError("loss_cl: label " + std::to_string(y) + " out of range for " +
                            std::to_string(ways) + " ways");
    }
  }
  Var logp = ops::log_softmax_rows(logits);
  std::vector<Var> picked;
  picked.reserve(n);
  for (std::size_t i = 0; i < n; ++i) picked.push_back(ops::pick(logp, i * ways + labels[i]));
  Var s = picked.size() == 1 ? picked[0] : ops::sum(ops::concat_cols(picked));
  return ops::scale(s, -1.0 / static_cast<double>(n));
}

Var loss_de(const Var& probabilities, const std::vector<double>& targets) {
  const std::size_t n = probabilities->value.size();
  if (n == 0) throw ValidationError("loss_de: empty input");
  if (targets.size() != n) throw ValidationError("loss_de: one target per probability required");
  const std::vector<std::size_t> flat = {n};
  Var p = ops::reshape(probabilities, flat);
  Tensor y(flat), not_y(flat);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = targets[i];
    not_y[i] = 1.0 - targets[i];
  }
  const double lo = kProbClamp;
  const double hi = 1.0 - kProbClamp;
  Var log_p = ops::clamped_log(p, lo, hi);
  Var log_q = ops::clamped_log(ops::add_scalar(ops::scale(p, -1.0), 1.0), lo, hi);
  Var ll = ops::add(ops::mul(constant(y), log_p), ops::mul(constant(not_y), log_q));
  return ops::scale(ops::sum(ll), -1.0 / static_cast<double>(n));
}

Var total_loss(const Var& cl, const Var& de, const Var& phy, double beta, double gamma) {
  return ops::add(ops::add(cl, ops::scale(de, beta)), ops::scale(phy, gamma));
}

Var detection_logit(const Var& embedding, const Var& prototype, ParamScope& scope) {
  const std::size_t d = embedding->value.size();
  if (prototype->value.size() != d) throw ValidationError("detection head: prototype width mismatch");
  Var agreement = ops::mul(ops::reshape(ops::l2_normalize(embedding), {d}),
                           ops::reshape(ops::l2_normalize(prototype), {d}));
  return ops::reshape(ops::linear(agreement, scope("det/head_W"), scope("det/head_b")), {});
}

Var detection_probability(const Var& embedding, const Var& prototype, ParamScope& scope) {
  return ops::sigmoid(detection_logit(embedding, prototype, scope));
}

void TrainConfig::validate() const {
  if (ways < 1 || shots < 1) throw ValidationError("ways and shots must be >= 1");
  if (queries < ways) throw ValidationError("queries must be at least one per class");
  if (episodes_per_batch < 1) throw ValidationError("episodes_per_batch must be >= 1");
  if (beta < 0 || gamma < 0) throw ValidationError("loss weights beta and gamma must be >= 0");
  if (!(lambda >= 0 && lambda <= 1)) throw ValidationError("lambda must lie in [0,1]");
  if (!(q_neg >= 0 && q_neg < q_pos && q_pos <= 1)) {
    throw ValidationError("pseudo-label quantiles must satisfy 0 <= q_neg < q_pos <= 1");
  }
  optim.validate();
}

std::vector<double> class_mean_spectrum(const HsiCube& cube, const LabelMap& labels,
                                        std::uint16_t class_id) {
  std::vector<double> mean(cube.bands, 0.0);
  std::size_t count = 0;
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    if (labels.labels[p] != class_id) continue;
    ++count;
    for (std::size_t b = 0; b < cube.bands; ++b) mean[b] += cube.data[p * cube.bands + b];
  }
  if (count == 0) throw ValidationError("class " + std::to_string(class_id) + " has no pixels");
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

namespace {

QueryPseudoLabels select_query_labels(const std::vector<double>& scores, double q_pos,
                                      double q_neg) {
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double t_pos = quantile_sorted(sorted, q_pos);
  const double t_neg = quantile_sorted(sorted, q_neg);
  QueryPseudoLabels out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > t_pos) {
      out.index.push_back(i);
      out.label.push_back(1.0);
    } else if (scores[i] < t_neg) {
      out.index.push_back(i);
      out.label.push_back(0.0);
    }
  }
  return out;
}

bool has_both(const QueryPseudoLabels& q) {
  bool pos = false, neg = false;
  for (double y : q.label) (y > 0.5 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

EpisodeLosses episode_losses(const Episode& episode, std::size_t target_local,
                             const std::vector<double>& target_prior, const ModelConfig& cfg,
                             const dctma::FreqPartition& partition, const TrainConfig& train,
                             ParamScope& scope, const std::optional<QueryPseudoLabels>& fixed) {
  if (target_local >= episode.ways) throw ValidationError("pseudo-target index out of range");
  const std::size_t de = cfg.embed_width;
  EpisodeLosses out;
  out.target_local = target_local;

  std::vector<Var> target_h;
  std::vector<Var> target_e;
  for (const LabeledPatch& lp : episode.support) {
    if (lp.local_label != target_local) continue;
    const auto emb = pgte::embed(lp.patch, cfg, partition, scope);
    target_h.push_back(emb.h_ada);
    target_e.push_back(ops::reshape(emb.e, {1, de}));
  }

  std::vector<Var> query_e;
  std::vector<std::size_t> labels;
  for (const LabeledPatch& lp : episode.query) {
    query_e.push_back(pgte::embed(lp.patch, cfg, partition, scope).e);
    labels.push_back(lp.local_label);
  }
  std::vector<Var> rows;
  rows.reserve(query_e.size());
  for (const Var& e : query_e) rows.push_back(ops::reshape(e, {1, de}));
  out.cl = loss_cl(ops::linear(ops::concat_rows(rows), scope("cls/head_W")), labels);

  Var e_prior = pgte::prior_encode(target_prior, cfg, scope);
  out.phy = pgte::physical_loss(target_h, e_prior, scope);

  Var support_mean = ops::reshape(ops::mean_rows(ops::concat_rows(target_e)), {de});
  Var proto = ops::add(ops::scale(support_mean, train.lambda), ops::scale(e_prior, 1.0 - train.lambda));

  if (fixed) {
    out.pseudo = *fixed;
  } else {
    std::vector<double> scores;
    scores.reserve(query_e.size());
    for (const Var& e : query_e) {
      scores.push_back(cosine_similarity(e->value.data(), proto->value.data(), de));
    }
    out.pseudo = select_query_labels(scores, train.q_pos, train.q_neg);
  }
  if (has_both(out.pseudo)) {
    std::vector<Var> probs;
    for (std::size_t i : out.pseudo.index) {
      if (i >= query_e.size()) throw ValidationError("pseudo-label index out of range");
      probs.push_back(ops::reshape(detection_probability(query_e[i], proto, scope), {1}));
    }
    out.de = loss_de(ops::concat_cols(probs), out.pseudo.label);
  } else {
    out.de = constant(Tensor::scalar(0.0));
  }
  out.total = total_loss(out.cl, out.de, out.phy, train.beta, train.gamma);
  return out;
}

std::vector<LossRecord> meta_train_run(const SourceData& source, const ModelConfig& cfg,
                                       const TrainConfig& train, ParamStore& store,
                                       const ProgressFn& progress) {
  train.validate();
  cfg.validate();
  source.cube.validate();
  if (source.cube.bands != cfg.bands) {
    throw ValidationError("source cube has " + std::to_string(source.cube.bands) +
                          " bands, model expects " + std::to_string(cfg.bands));
  }
  if (train.ways != cfg.ways) {
    throw ValidationError("episode ways (" + std::to_string(train.ways) +
                          ") must equal the classification head rows (" +
                          std::to_string(cfg.ways) + ")");
  }
  store.reset_optimizer_state();
  for (const auto& prefix : train.frozen_prefixes) store.set_frozen_prefix(prefix, true);
  const auto partition = dctma::build_partition(cfg.bands, cfg.rho_low, cfg.rho_mid);

  std::map<std::uint16_t, std::vector<double>> priors = source.priors;
  for (auto& [id, values] : priors) {
    if (values.size() != cfg.bands) {
      throw ValidationError("prior for class " + std::to_string(id) + " has wrong length");
    }
  }

  // Fill the reference-spectrum table up front so workers only read it.
  for (std::uint16_t id : source.labels.labels) {
    if (id != 0 && !priors.count(id)) {
      priors.emplace(id, class_mean_spectrum(source.cube, source.labels, id));
    }
  }

  std::vector<LossRecord> trace;
  trace.reserve(train.iterations);
  const std::size_t batch = train.episodes_per_batch;
  for (std::size_t it = 0; it < train.iterations; ++it) {
    std::vector<Gradients> grads(batch);
    std::vector<LossRecord> parts(batch);
    parallel_for(batch, train.threads, [&](std::size_t b) {
      const std::uint64_t ep_seed = derive_seed(train.seed, it, b);
      const Episode ep = sample_episode(source.cube, source.labels, train.ways, train.shots,
                                        train.queries, ep_seed, cfg.patch_side);
      Rng pick(derive_seed(ep_seed, 0x7A46));
      const std::size_t target = pick.below(ep.ways);
      ParamScope scope(store);
      const EpisodeLosses l =
          episode_losses(ep, target, priors.at(ep.classes[target]), cfg, partition, train, scope);
      backward(l.total);
      grads[b] = scope.gradients();
      parts[b] = {it, l.cl->value.item(), l.de->value.item(), l.phy->value.item(),
                  l.total->value.item()};
    });
    Gradients mean;
    LossRecord rec;
    rec.iteration = it;
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      mean.add_scaled(grads[b], inv);
      rec.loss_cl += parts[b].loss_cl * inv;
      rec.loss_de += parts[b].loss_de * inv;
      rec.loss_phy += parts[b].loss_phy * inv;
      rec.loss_total += parts[b].loss_total * inv;
    }
    store.set_gradients(mean);
    adamw_update(store, train.optim);
    trace.push_back(rec);
    if (progress) progress(rec);
  }
  return trace;
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write loss trace: " + path.string());
  os << "iteration,loss_cl,loss_de,loss_phy,loss_total\n";
  os << std::setprecision(17);
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.loss_cl << ',' << r.loss_de << ',' << r.loss_phy << ','
       << r.loss_total << '\n';
  }
  if (!os) throw std::runtime_error("failed writing loss trace: " + path.string());
}

}  // namespace specdet::metatrain
