#include "dmicf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dmicf {

void PlantedBlocksConfig::validate() const {
  if (blocks == 0) throw std::invalid_argument("synthetic: blocks must be >= 1");
  if (users < blocks || items < blocks) {
    throw std::invalid_argument("synthetic: need at least one user and one item per block");
  }
  if (!(density > 0.0 && density <= 1.0)) {
    throw std::invalid_argument("synthetic: density must lie in (0,1]");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("synthetic: test_fraction must lie in [0,1)");
  }
}

std::size_t block_of(std::size_t index, std::size_t count, std::size_t blocks) {
  return index * blocks / count;
}

PlantedBlocks make_planted_blocks(const PlantedBlocksConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution keep(cfg.density);
  PlantedBlocks out;
  out.num_users = cfg.users;
  out.num_items = cfg.items;

  for (std::size_t u = 0; u < cfg.users; ++u) {
    const std::size_t b = block_of(u, cfg.users, cfg.blocks);
    std::vector<std::size_t> in_block;
    for (std::size_t i = 0; i < cfg.items; ++i) {
      if (block_of(i, cfg.items, cfg.blocks) == b) in_block.push_back(i);
    }
    std::vector<std::size_t> linked;
    for (std::size_t i : in_block) {
      if (keep(rng)) linked.push_back(i);
    }
    if (linked.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, in_block.size() - 1);
      linked.push_back(in_block[pick(rng)]);
    }

    std::size_t hold = 0;
    if (cfg.test_fraction > 0.0 && linked.size() >= 2) {
      hold = static_cast<std::size_t>(
          std::llround(cfg.test_fraction * static_cast<double>(linked.size())));
      hold = std::clamp<std::size_t>(hold, 1, linked.size() - 1);
    }
    std::shuffle(linked.begin(), linked.end(), rng);
    for (std::size_t k = 0; k < linked.size(); ++k) {
      (k < hold ? out.test : out.train).push_back({u, linked[k]});
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace dmicf
