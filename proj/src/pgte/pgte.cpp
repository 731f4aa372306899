#include "specdet/pgte.hpp"

#include <cmath>
#include <string>

#include "common/init.hpp"

namespace specdet::pgte {

namespace {

std::string block_name(std::size_t b, const char* leaf) {
  return "backbone/block" + std::to_string(b) + "/" + leaf;
}

Var attention(const Var& x, std::size_t block, const ModelConfig& cfg, ParamScope& scope) {
  const std::size_t dh = cfg.embed_width / cfg.heads;
  Var q = ops::linear(x, scope(block_name(block, "q_W")));
  Var k = ops::linear(x, scope(block_name(block, "k_W")));
  Var v = ops::linear(x, scope(block_name(block, "v_W")));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Var qh = ops::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = ops::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = ops::slice_cols(v, h * dh, (h + 1) * dh);
    Var weights = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt));
    heads.push_back(ops::matmul(weights, vh));
  }
  return ops::linear(ops::concat_cols(heads), scope(block_name(block, "o_W")),
                     scope(block_name(block, "o_b")));
}

}  // namespace

Var backbone_encode(const Var& h_ada, const Patch& patch, const ModelConfig& cfg,
                    ParamScope& scope) {
  if (h_ada->value.size() != cfg.adapter_width) {
    throw ValidationError("backbone_encode: adapter feature width " +
                          std::to_string(h_ada->value.size()) + " != " +
                          std::to_string(cfg.adapter_width));
  }
  if (patch.bands != cfg.bands || patch.side != cfg.patch_side) {
    throw ValidationError("backbone_encode: patch shape does not match model configuration");
  }
  Var ada_token = ops::reshape(
      ops::linear(h_ada, scope("backbone/in_ada_W"), scope("backbone/in_ada_b")),
      {1, cfg.embed_width});
  Var raw_tokens = ops::linear(constant(dctma::token_matrix(patch)), scope("backbone/in_raw_W"),
                               scope("backbone/in_raw_b"));
  Var x = ops::add(ops::concat_rows({ada_token, raw_tokens}), scope("backbone/pos"));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    Var n1 = ops::layer_norm_rows(x, scope(block_name(b, "ln1_g")), scope(block_name(b, "ln1_b")));
    x = ops::add(x, attention(n1, b, cfg, scope));
    Var n2 = ops::layer_norm_rows(x, scope(block_name(b, "ln2_g")), scope(block_name(b, "ln2_b")));
    Var hidden = activate(
        ops::linear(n2, scope(block_name(b, "ff1_W")), scope(block_name(b, "ff1_b"))),
        cfg.hidden_activation);
    x = ops::add(x, ops::linear(hidden, scope(block_name(b, "ff2_W")),
                                scope(block_name(b, "ff2_b"))));
  }
  Var out = ops::layer_norm_rows(x, scope("backbone/ln_f_g"), scope("backbone/ln_f_b"));
  return ops::mean_rows(out);
}

Var prior_encode(const std::vector<double>& spectrum, const ModelConfig& cfg, ParamScope& scope) {
  if (spectrum.size() != cfg.bands) {
    throw ValidationError("prior_encode: spectrum length " + std::to_string(spectrum.size()) +
                          " != " + std::to_string(cfg.bands));
  }
  Var t = constant(Tensor::vector(spectrum));
  Var hidden =
      activate(ops::linear(t, scope("prior/l1_W"), scope("prior/l1_b")), cfg.hidden_activation);
  return ops::linear(hidden, scope("prior/l2_W"), scope("prior/l2_b"));
}

Var align_encode(const Var& h_ada, ParamScope& scope) {
  return ops::linear(h_ada, scope("align/proj_W"), scope("align/proj_b"));
}

Var physical_loss(const std::vector<Var>& support_adapter_features, const Var& e_prior,
                  ParamScope& scope) {
  if (support_adapter_features.empty()) throw ValidationError("physical_loss: empty support set");
  std::vector<Var> terms;
  terms.reserve(support_adapter_features.size());
  for (const Var& h : support_adapter_features) {
    terms.push_back(ops::sum(ops::square(ops::sub(align_encode(h, scope), e_prior))));
  }
  Var total = terms.size() == 1 ? terms[0] : ops::sum(ops::concat_cols(terms));
  return ops::scale(total, 1.0 / static_cast<double>(terms.size()));
}

Prototype blend_prototype(const std::vector<double>& support_mean,
                          const std::vector<double>& prior_embedding, double lambda,
                          std::uint32_t class_id) {
  if (!(lambda >= 0 && lambda <= 1)) throw ValidationError("lambda must lie in [0,1]");
  if (support_mean.size() != prior_embedding.size()) {
    throw ValidationError("prototype components differ in width");
  }
  Prototype p;
  p.class_id = class_id;
  p.lambda = lambda;
  p.support_mean = support_mean;
  p.prior_embedding = prior_embedding;
  p.vector.resize(support_mean.size());
  for (std::size_t j = 0; j < p.vector.size(); ++j) {
    p.vector[j] = lambda * support_mean[j] + (1.0 - lambda) * prior_embedding[j];
  }
  return p;
}

Embedding embed(const Patch& patch, const ModelConfig& cfg, const dctma::FreqPartition& partition,
                ParamScope& scope) {
  Embedding out;
  out.h_ada = dctma::dctma_forward(patch, cfg, partition, scope);
  out.e = backbone_encode(out.h_ada, patch, cfg, scope);
  return out;
}

Prototype rectify_prototype(const std::vector<Patch>& support, const std::vector<double>& e_prior,
                            double lambda, const ModelConfig& cfg,
                            const dctma::FreqPartition& partition, const ParamStore& store,
                            std::uint32_t class_id) {
  if (!(lambda >= 0 && lambda <= 1)) throw ValidationError("lambda must lie in [0,1]");
  if (support.empty()) throw ValidationError("rectify_prototype: empty support set");
  std::vector<double> mean(cfg.embed_width, 0.0);
  for (const Patch& p : support) {
    ParamScope scope(store);
    const Var e_var = embed(p, cfg, partition, scope).e;
    const Tensor& e = e_var->value;
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j];
  }
  for (double& v : mean) v /= static_cast<double>(support.size());
  return blend_prototype(mean, e_prior, lambda, class_id);
}

void init_parameters(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t de = cfg.embed_width;
  detail::add_linear(store, "backbone/in_ada", de, cfg.adapter_width, seed);
  detail::add_linear(store, "backbone/in_raw", de, cfg.bands, seed);
  store.add("backbone/pos",
            detail::uniform_tensor({cfg.tokens() + 1, de}, 0.1, seed, "backbone/pos"));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    store.add(block_name(b, "ln1_g"), Tensor({de}, 1.0));
    store.add(block_name(b, "ln1_b"), Tensor({de}, 0.0));
    for (const char* m : {"q", "k", "v"}) {
      detail::add_linear(store, block_name(b, m), de, de, seed, false);
    }
    detail::add_linear(store, block_name(b, "o"), de, de, seed);
    store.add(block_name(b, "ln2_g"), Tensor({de}, 1.0));
    store.add(block_name(b, "ln2_b"), Tensor({de}, 0.0));
    detail::add_linear(store, block_name(b, "ff1"), cfg.ffn_width, de, seed);
    detail::add_linear(store, block_name(b, "ff2"), de, cfg.ffn_width, seed);
  }
  store.add("backbone/ln_f_g", Tensor({de}, 1.0));
  store.add("backbone/ln_f_b", Tensor({de}, 0.0));

  detail::add_linear(store, "prior/l1", cfg.prior_hidden, cfg.bands, seed);
  detail::add_linear(store, "prior/l2", de, cfg.prior_hidden, seed);
  detail::add_linear(store, "align/proj", de, cfg.adapter_width, seed);
}

}  // namespace specdet::pgte
