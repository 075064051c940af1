#pragma once

#include <cstdint>
#include <vector>

#include "dmicf/graph.hpp"

namespace dmicf {

/// Block-structured interactions: users and items are split into `blocks`
/// contiguous groups and each user only links to items of its own group.
struct PlantedBlocksConfig {
  std::size_t users = 40;
  std::size_t items = 40;
  std::size_t blocks = 2;
  double density = 0.8;        // within-block edge probability
  double test_fraction = 0.1;  // per-user share held out as test
  std::uint64_t seed = 7;

  void validate() const;
};

struct PlantedBlocks {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Edge> train;
  std::vector<Edge> test;
};

/// Block index of user `u` (or item `u`) among `count` entities.
std::size_t block_of(std::size_t index, std::size_t count, std::size_t blocks);

/// Every user keeps at least one training edge; users with two or more
/// edges give max(1, round(test_fraction·degree)) of them to the test split.
PlantedBlocks make_planted_blocks(const PlantedBlocksConfig& cfg);

}  // namespace dmicf
