#include "specdet/model_config.hpp"

#include "common/init.hpp"
#include "specdet/dctma.hpp"
#include "specdet/pgte.hpp"

namespace specdet {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw ValidationError("unknown activation '" + name + "' (expected relu or softplus)");
}

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "softplus";
}

Var activate(const Var& x, Activation a) {
  return a == Activation::kRelu ? ops::relu(x) : ops::softplus(x);
}

void ModelConfig::validate() const {
  if (patch_side == 0 || patch_side % 2 == 0) throw ValidationError("patch_side must be odd");
  if (group_width == 0 || adapter_width == 0 || state_size == 0 || embed_width == 0 ||
      ffn_width == 0 || prior_hidden == 0 || heads == 0 || ways == 0) {
    throw ValidationError("model widths must be positive");
  }
  if (embed_width % heads != 0) throw ValidationError("embed_width must be divisible by heads");
  if (!(initial_step > 0)) throw ValidationError("initial_step must be > 0");
  dctma::build_partition(bands, rho_low, rho_mid);
}

ParamStore init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  dctma::init_parameters(store, cfg, seed);
  pgte::init_parameters(store, cfg, seed);
  detail::add_linear(store, "cls/head", cfg.ways, cfg.embed_width, seed, false);
  // Constant weights make the untrained head a scaled cosine to the prototype.
  store.add("det/head_W", Tensor({1, cfg.embed_width}, kDetHeadInit));
  store.add("det/head_b", Tensor({1}, 0.0));
  return store;
}

}  // namespace specdet
