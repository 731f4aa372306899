#include <cmath>

#include "doctest.h"
#include "specdet/pgte.hpp"
#include "specdet/rng.hpp"

using namespace specdet;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.bands = 8;
  cfg.patch_side = 3;
  cfg.group_width = 8;
  cfg.adapter_width = 8;
  cfg.state_size = 4;
  cfg.embed_width = 8;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.ffn_width = 16;
  cfg.prior_hidden = 16;
  cfg.ways = 3;
  cfg.group_activation = Activation::kSoftplus;
  return cfg;
}

Patch random_patch(const ModelConfig& cfg, Rng& rng) {
  Patch p;
  p.side = cfg.patch_side;
  p.bands = cfg.bands;
  p.values.resize(p.tokens() * p.bands);
  for (double& v : p.values) v = rng.uniform(0, 1);
  return p;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

bool all_zero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("backbone_encode: determinism and width check") {
  const ModelConfig cfg = tiny_config();
  const ParamStore store = init_parameters(cfg, 2);
  Rng rng(1);
  const Patch p = random_patch(cfg, rng);
  const Tensor h = Tensor::vector(random_vector(cfg.adapter_width, rng));
  ParamScope a(store), b(store);
  CHECK(pgte::backbone_encode(constant(h), p, cfg, a)->value.storage() ==
        pgte::backbone_encode(constant(h), p, cfg, b)->value.storage());
  ParamScope c(store);
  CHECK_THROWS_AS(pgte::backbone_encode(constant(Tensor::vector({1, 2})), p, cfg, c), ValidationError);
}

TEST_CASE("frozen backbone: gradient reaches the adapter, backbone untouched") {
  const ModelConfig cfg = tiny_config();
  const auto part = dctma::build_partition(cfg.bands, cfg.rho_low, cfg.rho_mid);
  ParamStore store = init_parameters(cfg, 5);
  store.set_frozen_prefix("backbone/", true);
  const ParamStore before = store;
  Rng rng(3);
  const Patch p = random_patch(cfg, rng);

  ParamScope scope(store);
  const auto emb = pgte::embed(p, cfg, part, scope);
  backward_gradients(ops::sum(ops::square(emb.e)), scope, store);
  bool adapter_moved = false;
  for (const auto& n : store.names_with_prefix("dctma/")) adapter_moved |= !all_zero(store.entry(n).grad);
  CHECK(adapter_moved);
  for (const auto& n : store.names_with_prefix("backbone/")) CHECK(all_zero(store.entry(n).grad));
  adamw_update(store, OptimConfig{});
  CHECK(store.values_equal(before, "backbone/"));
  CHECK_FALSE(store.values_equal(before, "dctma/"));

  // the perception path derivative matches central differences
  ParamStore probe = init_parameters(cfg, 5);
  probe.set_frozen_prefix("backbone/", true);
  auto fn = [&](ParamScope& s) { return ops::sum(ops::square(pgte::embed(p, cfg, part, s).e)); };
  FdOptions opts;
  opts.prefix = "dctma/";
  opts.coordinates = 150;
  CHECK(finite_difference_check(fn, probe, opts).max_relative_error < 1e-4);
}

TEST_CASE("prior_encode: zero weights, determinism, length check, gradient audit") {
  const ModelConfig cfg = tiny_config();
  ParamStore store = init_parameters(cfg, 4);
  Rng rng(2);
  const auto t = random_vector(cfg.bands, rng);
  {
    ParamStore zero = store;
    for (const auto& n : zero.names_with_prefix("prior/")) zero.set_value(n, Tensor::zeros_like(zero.value(n)));
    ParamScope s(zero);
    CHECK(all_zero(pgte::prior_encode(t, cfg, s)->value));
  }
  ParamScope a(store), b(store);
  CHECK(pgte::prior_encode(t, cfg, a)->value.storage() == pgte::prior_encode(t, cfg, b)->value.storage());
  ParamScope c(store);
  CHECK_THROWS_AS(pgte::prior_encode(random_vector(5, rng), cfg, c), ValidationError);

  auto fn = [&](ParamScope& s) { return ops::sum(ops::square(pgte::prior_encode(t, cfg, s))); };
  FdOptions opts;
  opts.prefix = "prior/";
  CHECK(finite_difference_check(fn, store, opts).max_relative_error < 1e-4);
}

TEST_CASE("physical_loss: zero at the anchor, unit offset, empty support") {
  const ModelConfig cfg = tiny_config();
  ParamStore store;
  Tensor eye({cfg.embed_width, cfg.adapter_width});
  for (std::size_t i = 0; i < cfg.embed_width; ++i) eye.at(i, i) = 1.0;
  store.add("align/proj_W", eye);
  store.add("align/proj_b", Tensor({cfg.embed_width}));
  ParamScope scope(store);
  Rng rng(6);
  const Tensor anchor = Tensor::vector(random_vector(cfg.embed_width, rng));
  std::vector<Var> hs = {constant(anchor), constant(anchor)};
  CHECK(pgte::physical_loss(hs, constant(anchor), scope)->value.item() == 0.0);

  Tensor shifted = anchor;
  shifted[3] += 1.0;
  CHECK(pgte::physical_loss({constant(shifted)}, constant(anchor), scope)->value.item() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pgte::physical_loss({constant(shifted), constant(anchor)}, constant(anchor), scope)->value.item() ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(pgte::physical_loss({}, constant(anchor), scope), ValidationError);
}

TEST_CASE("physical_loss bypasses the backbone and updates only align/ and dctma/") {
  const ModelConfig cfg = tiny_config();
  const auto part = dctma::build_partition(cfg.bands, cfg.rho_low, cfg.rho_mid);
  ParamStore store = init_parameters(cfg, 9);
  store.set_frozen_prefix("backbone/", true);
  const ParamStore before = store;
  Rng rng(10);
  std::vector<Patch> support = {random_patch(cfg, rng), random_patch(cfg, rng)};
  const Tensor e_prior = Tensor::vector(random_vector(cfg.embed_width, rng));

  auto loss_fn = [&](ParamScope& s) {
    std::vector<Var> hs;
    for (const Patch& p : support) hs.push_back(dctma::dctma_forward(p, cfg, part, s));
    return pgte::physical_loss(hs, constant(e_prior), s);
  };
  ParamScope scope(store);
  const Var loss = loss_fn(scope);
  CHECK(loss->value.item() >= 0.0);
  backward_gradients(loss, scope, store);
  for (const auto& n : store.names_with_prefix("backbone/")) CHECK(all_zero(store.entry(n).grad));
  bool adapter_moved = false;
  for (const auto& n : store.names_with_prefix("dctma/")) adapter_moved |= !all_zero(store.entry(n).grad);
  CHECK(adapter_moved);
  adamw_update(store, OptimConfig{});

  for (const char* ns : kNamespaces) {
    const std::string prefix = ns;
    const bool may_change = prefix == "align/" || prefix == "dctma/";
    CAPTURE(prefix);
    if (may_change) {
      CHECK_FALSE(store.values_equal(before, prefix));
    } else {
      CHECK(store.values_equal(before, prefix));
    }
  }

  ParamStore probe = init_parameters(cfg, 9);
  FdOptions opts;
  opts.prefix = "dctma/";
  opts.coordinates = 100;
  CHECK(finite_difference_check(loss_fn, probe, opts).max_relative_error < 1e-4);
}

TEST_CASE("prototype blend: endpoints, 0.7 example, convexity, range") {
  Rng rng(12);
  const auto m = random_vector(6, rng);
  const auto e = random_vector(6, rng);
  CHECK(pgte::blend_prototype(m, e, 1.0).vector == m);
  CHECK(pgte::blend_prototype(m, e, 0.0).vector == e);
  const auto p = pgte::blend_prototype(m, e, 0.7, 4);
  CHECK(p.class_id == 4);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(p.vector[j] == p.lambda * p.support_mean[j] + (1.0 - p.lambda) * p.prior_embedding[j]);
    CHECK(p.vector[j] == doctest::Approx(0.7 * m[j] + 0.3 * e[j]).epsilon(1e-15));
  }
  for (int k = 0; k <= 20; ++k) {
    const auto q = pgte::blend_prototype(m, e, k / 20.0);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(q.vector[j] >= std::min(m[j], e[j]) - 1e-15);
      CHECK(q.vector[j] <= std::max(m[j], e[j]) + 1e-15);
    }
  }
  CHECK_THROWS_AS(pgte::blend_prototype(m, e, 1.5), ValidationError);
  CHECK_THROWS_AS(pgte::blend_prototype(m, e, -0.1), ValidationError);
}

TEST_CASE("rectify_prototype: support mean through the frozen path") {
  const ModelConfig cfg = tiny_config();
  const auto part = dctma::build_partition(cfg.bands, cfg.rho_low, cfg.rho_mid);
  const ParamStore store = init_parameters(cfg, 13);
  Rng rng(14);
  std::vector<Patch> support = {random_patch(cfg, rng), random_patch(cfg, rng), random_patch(cfg, rng)};
  const auto e_prior = random_vector(cfg.embed_width, rng);
  const auto proto = pgte::rectify_prototype(support, e_prior, 1.0, cfg, part, store, 2);
  std::vector<double> mean(cfg.embed_width, 0.0);
  for (const Patch& p : support) {
    ParamScope s(store);
    const auto e = pgte::embed(p, cfg, part, s).e->value;
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j] / 3.0;
  }
  for (std::size_t j = 0; j < mean.size(); ++j) CHECK(proto.vector[j] == doctest::Approx(mean[j]).epsilon(1e-12));
  CHECK(pgte::rectify_prototype(support, e_prior, 0.0, cfg, part, store).vector == e_prior);
  CHECK_THROWS_AS(pgte::rectify_prototype({}, e_prior, 0.5, cfg, part, store), ValidationError);
}
