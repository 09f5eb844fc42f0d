#include "causalrec/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace causalrec::eval {

std::size_t rank_target(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw std::out_of_range("rank_target: target out of range");
  const double t = scores[target];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > t || (scores[i] == t && i < target)) ++rank;
  }
  return rank;
}

Metrics metrics(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("metrics: no ranks");
  Metrics m;
  for (const auto r : ranks) {
    if (r == 0) throw std::invalid_argument("metrics: ranks are 1-based");
    if (r > k) continue;
    m.hr += 1.0;
    m.mrr += 1.0 / static_cast<double>(r);
    m.ndcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  const double n = static_cast<double>(ranks.size());
  m.hr /= n;
  m.mrr /= n;
  m.ndcg /= n;
  return m;
}

RankingResult evaluate(const model::Model& model, const model::Parameters& params,
                       std::span<const ingest::Sample> samples, std::span<const std::size_t> cutoffs,
                       std::size_t threads) {
  RankingResult result;
  result.ranks.assign(samples.size(), 0);
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));

  auto work = [&](std::size_t begin, std::size_t end) {
    model::Scorer scorer(model, params);
    for (std::size_t i = begin; i < end; ++i) {
      const auto breakdown = scorer.score(samples[i].prefix);
      result.ranks[i] = rank_target(breakdown.total.values(), samples[i].target);
    }
  };
  if (threads == 1) {
    work(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (samples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(samples.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  if (!samples.empty()) {
    for (const auto k : cutoffs) result.at[k] = metrics(result.ranks, k);
  }
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const RankingResult& result) {
  out << "metric,K,value\n";
  for (const auto& [k, m] : result.at) {
    out << "HR," << k << ',' << fmt(m.hr) << '\n';
    out << "MRR," << k << ',' << fmt(m.mrr) << '\n';
    out << "NDCG," << k << ',' << fmt(m.ndcg) << '\n';
  }
}

void write_metrics_json(std::ostream& out, const RankingResult& result) {
  nlohmann::ordered_json j;
  j["samples"] = result.ranks.size();
  for (const auto& [k, m] : result.at) {
    j["metrics"][std::to_string(k)] = {{"hr", m.hr}, {"mrr", m.mrr}, {"ndcg", m.ndcg}};
  }
  out << j.dump(2) << '\n';
}

}  // namespace causalrec::eval
