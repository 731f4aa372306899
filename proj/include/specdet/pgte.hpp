#pragma once

#include <vector>

#include "specdet/autograd.hpp"
#include "specdet/dctma.hpp"
#include "specdet/hsio.hpp"
#include "specdet/model_config.hpp"
#include "specdet/param_store.hpp"

namespace specdet::pgte {

/// Transformer encoder over [h^ada token; s² projected raw-spectrum tokens]
/// with learned positions, pre-norm blocks and a mean-pooled readout.
///
/// Whether gradients reach backbone/ is governed solely by the store's
/// freeze flags; gradients always flow back into h_ada.
Var backbone_encode(const Var& h_ada, const Patch& patch, const ModelConfig& cfg,
                    ParamScope& scope);

/// Two-layer MLP from a length-B spectrum to the embedding width.
Var prior_encode(const std::vector<double>& spectrum, const ModelConfig& cfg, ParamScope& scope);

/// Affine projection of h^ada into the embedding space.
Var align_encode(const Var& h_ada, ParamScope& scope);

/// (1/K) Σ ‖E_a(h_k) − e_prior‖².
Var physical_loss(const std::vector<Var>& support_adapter_features, const Var& e_prior,
                  ParamScope& scope);

struct Prototype {
  std::uint32_t class_id = 0;
  std::vector<double> vector;        // p_c
  double lambda = 0.7;
  std::vector<double> support_mean;  // mean frozen-backbone embedding
  std::vector<double> prior_embedding;
};

/// Convex blend λ·m + (1−λ)·e with both components kept for audit.
Prototype blend_prototype(const std::vector<double>& support_mean,
                          const std::vector<double>& prior_embedding, double lambda,
                          std::uint32_t class_id = 0);

/// Embeds each support patch through adapter and backbone, averages, and
/// blends with e_prior.
Prototype rectify_prototype(const std::vector<Patch>& support, const std::vector<double>& e_prior,
                            double lambda, const ModelConfig& cfg,
                            const dctma::FreqPartition& partition, const ParamStore& store,
                            std::uint32_t class_id = 0);

/// Adapter output and backbone embedding of one patch in one graph.
struct Embedding {
  Var h_ada;
  Var e;
};
Embedding embed(const Patch& patch, const ModelConfig& cfg, const dctma::FreqPartition& partition,
                ParamScope& scope);

void init_parameters(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

}  // namespace specdet::pgte
