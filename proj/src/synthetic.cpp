#include "causalrec/synthetic.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace causalrec::synthetic {

PlantedData planted_chains(const PlantedConfig& config) {
  if (config.chain_length < 2) throw std::invalid_argument("planted_chains: chain_length must be >= 2");
  if (config.num_chains == 0) throw std::invalid_argument("planted_chains: need at least one chain");
  if (config.min_len < 1 || config.max_len < config.min_len) {
    throw std::invalid_argument("planted_chains: bad length range");
  }
  if (!(config.noise >= 0.0 && config.noise <= 1.0)) throw std::invalid_argument("planted_chains: noise in [0, 1]");

  const std::size_t n = config.num_items();
  std::mt19937_64 rng(config.seed);
  std::vector<ItemIndex> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  PlantedData data;
  data.successor.assign(n, 0);
  for (std::size_t c = 0; c < config.num_chains; ++c) {
    for (std::size_t k = 0; k < config.chain_length; ++k) {
      const ItemIndex from = perm[c * config.chain_length + k];
      const ItemIndex to = perm[c * config.chain_length + (k + 1) % config.chain_length];
      data.successor[from] = to;
    }
  }

  std::uniform_int_distribution<std::size_t> pick_item(0, n - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, n - 2);
  std::uniform_int_distribution<std::size_t> pick_len(config.min_len, config.max_len);
  std::bernoulli_distribution jump(config.noise);
  for (std::size_t s = 0; s < config.num_sessions; ++s) {
    ingest::Session session;
    session.id = "s" + std::to_string(s);
    session.start_time = static_cast<std::int64_t>(s);
    std::vector<bool> flags;
    const std::size_t len = pick_len(rng);
    ItemIndex cur = static_cast<ItemIndex>(pick_item(rng));
    session.items.push_back(cur);
    flags.push_back(false);
    while (session.items.size() < len) {
      ItemIndex next = data.successor[cur];
      const bool noisy = jump(rng);
      if (noisy) {
        auto other = static_cast<ItemIndex>(pick_other(rng));
        next = other >= cur ? other + 1 : other;
      }
      session.items.push_back(next);
      flags.push_back(noisy);
      cur = next;
    }
    data.sessions.push_back(std::move(session));
    data.noise.push_back(std::move(flags));
  }
  return data;
}

std::vector<ingest::Sample> planted_samples(const PlantedData& data) {
  std::vector<ingest::Sample> out;
  for (std::size_t s = 0; s < data.sessions.size(); ++s) {
    const auto& items = data.sessions[s].items;
    for (std::size_t t = 1; t < items.size(); ++t) {
      if (data.noise[s][t]) continue;
      out.push_back({std::vector<ItemIndex>(items.begin(), items.begin() + t), items[t]});
    }
  }
  return out;
}

}  // namespace causalrec::synthetic
