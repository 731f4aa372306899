#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "specdet/param_store.hpp"
#include "specdet/rng.hpp"

namespace specdet::detail {

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform(-bound, bound) draws seeded from (seed, name), so one entry's
/// values do not depend on registration order.
inline Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, std::uint64_t seed,
                             std::string_view name) {
  Tensor t(std::move(shape));
  Rng rng(derive_seed(seed, fnv1a(name)));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

/// Weight of shape out×in with the symmetric fan-in bound 1/sqrt(in).
inline void add_linear(ParamStore& store, const std::string& name, std::size_t out,
                       std::size_t in, std::uint64_t seed, bool with_bias = true) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(name + "_W", uniform_tensor({out, in}, bound, seed, name + "_W"));
  if (with_bias) store.add(name + "_b", Tensor({out}, 0.0));
}

}  // namespace specdet::detail
