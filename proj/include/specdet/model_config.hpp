#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "specdet/autograd.hpp"
#include "specdet/param_store.hpp"

namespace specdet {

enum class Activation { kRelu, kSoftplus };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);
Var activate(const Var& x, Activation a);

/// Widths and structural choices shared by every trainable module.
struct ModelConfig {
  std::size_t bands = 32;
  std::size_t patch_side = 5;
  double rho_low = 0.25;
  double rho_mid = 0.60;
  bool frequency_masking = true;
  Activation group_activation = Activation::kRelu;
  Activation hidden_activation = Activation::kRelu;  // backbone FFN and prior MLP
  std::size_t group_width = 64;    // spectral descriptor width
  std::size_t adapter_width = 64;  // adapter output width
  std::size_t state_size = 16;     // SSM state per channel
  double initial_step = 0.1;       // softplus(bias) of the step projection at init
  std::size_t embed_width = 64;    // backbone embedding width
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ffn_width = 128;
  std::size_t prior_hidden = 128;
  std::size_t ways = 10;           // classification head rows

  std::size_t tokens() const noexcept { return patch_side * patch_side; }
  void validate() const;
};

/// Registers every parameter under the dctma/, backbone/, prior/, align/,
/// cls/ and det/ namespaces with seed-derived fan-in uniform initialisation.
ParamStore init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// Initial value of every det/head_W weight.
inline constexpr double kDetHeadInit = 5.0;

inline constexpr const char* kNamespaces[] = {"dctma/", "backbone/", "prior/",
                                              "align/", "cls/",      "det/"};

}  // namespace specdet
