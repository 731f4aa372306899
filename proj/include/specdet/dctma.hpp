#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "specdet/autograd.hpp"
#include "specdet/hsio.hpp"
#include "specdet/model_config.hpp"
#include "specdet/param_store.hpp"

namespace specdet::dctma {

/// Orthonormal DCT-II matrix: row k is the k-th cosine basis vector.
Tensor dct_matrix(std::size_t n);

/// Patch flattened to B × s² (column t holds the spectrum of token t).
Tensor spectral_matrix(const Patch& patch);
/// Patch flattened to s² × B (row t is the spectrum of token t).
Tensor token_matrix(const Patch& patch);

/// DCT along the spectral axis of the B × s² matrix.
Tensor dct_spectral(const Patch& patch);

enum Group : std::size_t { kLow = 0, kMid = 1, kHigh = 2 };
inline constexpr std::array<const char*, 3> kGroupNames = {"L", "M", "H"};

/// Split of DCT indices into low/mid/high groups (0-based half-open ranges).
struct FreqPartition {
  std::size_t bands = 0;
  double rho_low = 0;
  double rho_mid = 0;
  std::size_t low_end = 0;  // |I_L|
  std::size_t mid_end = 0;  // |I_L| + |I_M|

  std::size_t size(Group g) const noexcept;
  std::pair<std::size_t, std::size_t> range(Group g) const noexcept;
  /// 0/1 diagonal of the group's masking matrix.
  std::vector<double> mask(Group g) const;
};

/// Floor rule: I_L = [0, floor(ρ_L·B)), I_M up to floor(ρ_M·B), I_H the rest.
/// Throws if any group is empty, naming it.
FreqPartition build_partition(std::size_t bands, double rho_low, double rho_mid);

/// z^(g) = mean over tokens of act(W_g · (M^(g) f)) for the three groups.
/// With masking disabled every group sees the full coefficient matrix.
std::array<Var, 3> group_encode(const Var& coeffs, const FreqPartition& partition,
                                ParamScope& scope, Activation act, bool masking = true);

struct GateResult {
  Var weights;   // 1×3 softmax over w_attᵀz^(g)
  Var features;  // Σ α_g z^(g)
};
GateResult spectral_gate(const std::array<Var, 3>& z, const Var& w_att);

/// Zero-order-hold discretisation of one diagonal mode.
struct Discretized {
  double a_bar;
  double b_bar;
};
Discretized zoh_discretize(double a, double delta, double b);

/// Fused selective scan over T tokens with C channels and N states per channel:
///   h_t[c,k] = exp(Δ_t[c]·a_k)·h_{t-1}[c,k] + φ(Δ_t[c], a_k)·B_t[k]·x_t[c]
///   y_t[c]   = Σ_k C_t[k]·h_t[c,k],          φ(Δ,a) = (exp(Δa) − 1)/a
/// Inputs are x, delta (T×C), bcoef, ccoef (T×N) and a (N, negative).
/// The backward pass runs the adjoint recurrence in reverse time.
Var selective_scan(const Var& x, const Var& delta, const Var& bcoef, const Var& ccoef,
                   const Var& a);

/// Token-level spatial branch: derives Δ, B, C per token from the learned
/// projections, scans, and averages y_t over tokens.
Var spatial_branch(const Var& tokens, ParamScope& scope);

/// Cross-gated fusion of the spectral and spatial features into h^ada.
Var cross_gate_fuse(const Var& e_spec, const Var& e_spa, ParamScope& scope);

struct ForwardTrace {
  Var coeffs;
  std::array<Var, 3> descriptors;
  GateResult gate;
  Var e_spatial;
  Var h_ada;
};

/// Full adapter: DCT → groups → gating, tokens → scan, then fusion.
ForwardTrace forward(const Patch& patch, const ModelConfig& cfg, const FreqPartition& partition,
                     ParamScope& scope);
Var dctma_forward(const Patch& patch, const ModelConfig& cfg, const FreqPartition& partition,
                  ParamScope& scope);

/// Registers dctma/ parameters.
void init_parameters(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

}  // namespace specdet::dctma
