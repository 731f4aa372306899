#include <algorithm>
#include <map>

#include "specdet/hsio.hpp"
#include "specdet/rng.hpp"

namespace specdet {

Episode sample_episode(const HsiCube& cube, const LabelMap& labels, std::size_t ways,
                       std::size_t shots, std::size_t query_total, std::uint64_t seed,
                       std::size_t patch_side) {
  if (labels.height != cube.height || labels.width != cube.width) {
    throw ValidationError("label map dimensions do not match cube");
  }
  if (ways == 0 || shots == 0) throw ValidationError("ways and shots must be >= 1");

  std::map<std::uint16_t, std::vector<std::size_t>> by_class;
  for (std::size_t p = 0; p < labels.labels.size(); ++p) {
    if (labels.labels[p] != 0) by_class[labels.labels[p]].push_back(p);
  }
  if (by_class.size() < ways) {
    throw ValidationError("episode needs " + std::to_string(ways) + " classes but only " +
                          std::to_string(by_class.size()) + " are labeled");
  }

  Rng rng(seed);
  std::vector<std::uint16_t> ids;
  for (const auto& kv : by_class) ids.push_back(kv.first);
  rng.shuffle(ids);
  ids.resize(ways);
  std::sort(ids.begin(), ids.end());

  Episode ep;
  ep.ways = ways;
  ep.shots = shots;
  ep.classes = ids;
  ep.seed = seed;
  for (std::size_t c = 0; c < ways; ++c) {
    const std::uint16_t id = ids[c];
    const std::size_t n_query = query_total / ways + (c < query_total % ways ? 1 : 0);
    std::vector<std::size_t> pixels = by_class[id];
    if (pixels.size() < shots + n_query) {
      throw ValidationError("class " + std::to_string(id) + " has " +
                            std::to_string(pixels.size()) + " labeled pixels, episode needs " +
                            std::to_string(shots + n_query));
    }
    Rng class_rng(derive_seed(seed, id));
    class_rng.shuffle(pixels);
    for (std::size_t k = 0; k < shots + n_query; ++k) {
      const std::size_t p = pixels[k];
      LabeledPatch lp{extract_patch(cube, p / cube.width, p % cube.width, patch_side), id, c};
      (k < shots ? ep.support : ep.query).push_back(std::move(lp));
    }
  }
  return ep;
}

}  // namespace specdet
