#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "causalrec/ingest.h"
#include "causalrec/model.h"

namespace causalrec::eval {

// 1-based rank of `target`: 1 + #items scoring strictly higher + #items with an
// equal score and a smaller index.
std::size_t rank_target(std::span<const double> scores, std::size_t target);

struct Metrics {
  double hr = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
};

// Single relevant item per sample, ideal DCG = 1. Throws on empty input.
Metrics metrics(std::span<const std::size_t> ranks, std::size_t k);

struct RankingResult {
  std::vector<std::size_t> ranks;
  std::map<std::size_t, Metrics> at;  // keyed by cutoff K
};

inline constexpr std::size_t kDefaultCutoffs[] = {5, 10, 20};

RankingResult evaluate(const model::Model& model, const model::Parameters& params,
                       std::span<const ingest::Sample> samples,
                       std::span<const std::size_t> cutoffs = kDefaultCutoffs, std::size_t threads = 1);

// `metric,K,value` rows.
void write_metrics_csv(std::ostream& out, const RankingResult& result);
// Machine-readable summary (JSON object).
void write_metrics_json(std::ostream& out, const RankingResult& result);

}  // namespace causalrec::eval
