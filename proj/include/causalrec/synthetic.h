#pragma once

// Planted-structure session corpora for sanity checks: items are split into
// short cycles and sessions walk a cycle, with occasional random jumps.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "causalrec/ingest.h"

namespace causalrec::synthetic {

struct PlantedConfig {
  std::size_t num_chains = 10;
  std::size_t chain_length = 3;
  std::size_t num_sessions = 200;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  // Probability that a step jumps to a uniform random other item instead of
  // the planted successor. The walk continues from wherever it landed.
  double noise = 0.1;
  std::uint64_t seed = 7;

  std::size_t num_items() const { return num_chains * chain_length; }
};

struct PlantedData {
  std::vector<ingest::Session> sessions;
  // noise[s][t] is true when item t of session s (t >= 1) was a random jump.
  std::vector<std::vector<bool>> noise;
  // Planted successor of every item.
  std::vector<ItemIndex> successor;
};

PlantedData planted_chains(const PlantedConfig& config);

// Prefix samples whose target followed the planted successor.
std::vector<ingest::Sample> planted_samples(const PlantedData& data);

}  // namespace causalrec::synthetic
