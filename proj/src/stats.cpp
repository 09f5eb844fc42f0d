#include "causalrec/stats.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

namespace causalrec::stats {

double pab(const graphs::SessionGraph& g, ItemIndex a, ItemIndex b) {
  if (a >= g.num_items() || b >= g.num_items()) throw std::out_of_range("pab: item index out of range");
  const auto total = g.out_total(b);
  if (total == 0) throw std::domain_error("no outgoing transitions");
  return static_cast<double>(g.pair_count(b, a)) / static_cast<double>(total);
}

std::vector<PairProbability> analyzed_pairs(const graphs::SessionGraph& g, Orientation orientation) {
  std::set<std::pair<ItemIndex, ItemIndex>> keys;
  for (ItemIndex i = 0; i < g.num_items(); ++i) {
    for (const auto& n : g.out_neighbors(i)) keys.emplace(std::min(i, n.item), std::max(i, n.item));
  }
  std::vector<PairProbability> out;
  for (const auto& [lo, hi] : keys) {
    if (g.out_total(lo) == 0 || g.out_total(hi) == 0) continue;
    const ItemIndex a = orientation == Orientation::kSmallerFirst ? lo : hi;
    const ItemIndex b = orientation == Orientation::kSmallerFirst ? hi : lo;
    out.push_back({a, b, pab(g, a, b), pab(g, b, a)});
  }
  return out;
}

std::uint64_t AsymmetryGrid::total() const {
  std::uint64_t s = 0;
  for (const auto& row : counts) s = std::accumulate(row.begin(), row.end(), s);
  return s;
}

std::size_t group_of(std::size_t rank, std::size_t n) { return rank * kGroups / n; }

namespace {

// Decile group per pair for one probability; ties keep the pair order.
std::vector<std::size_t> groups_for(std::span<const PairProbability> pairs, double PairProbability::*field,
                                    std::array<GroupRange, kGroups>& ranges) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return pairs[x].*field < pairs[y].*field; });
  std::vector<std::size_t> group(pairs.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t gi = group_of(r, order.size());
    group[order[r]] = gi;
    const double v = pairs[order[r]].*field;
    auto& range = ranges[gi];
    if (range.size == 0) range.min = v;
    range.max = v;
    ++range.size;
  }
  return group;
}

}  // namespace

AsymmetryGrid build_grid(std::span<const PairProbability> pairs, const GridOptions& options) {
  if (pairs.size() < kGroups) {
    throw std::invalid_argument("asymmetry grid needs at least 10 item pairs, found " +
                                std::to_string(pairs.size()));
  }
  // Lexicographic pair order is the tie-break.
  std::vector<PairProbability> sorted(pairs.begin(), pairs.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const PairProbability& x, const PairProbability& y) {
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });

  AsymmetryGrid grid;
  grid.pairs = sorted.size();
  grid.epsilon = options.epsilon;
  const auto row = groups_for(sorted, &PairProbability::p_ab, grid.ab_groups);
  const auto col = groups_for(sorted, &PairProbability::p_ba, grid.ba_groups);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    ++grid.counts[row[i]][col[i]];
    if (options.epsilon && std::abs(sorted[i].p_ab - sorted[i].p_ba) >= *options.epsilon) ++grid.asymmetric_pairs;
  }
  return grid;
}

AsymmetryGrid build_grid(const graphs::SessionGraph& g, const GridOptions& options) {
  const auto pairs = analyzed_pairs(g, options.orientation);
  return build_grid(pairs, options);
}

void write_grid_csv(std::ostream& out, const AsymmetryGrid& grid) {
  for (const auto& row : grid.counts) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
}

void write_boundaries_csv(std::ostream& out, const AsymmetryGrid& grid) {
  out << "axis,group,min,max,size\n";
  auto emit = [&](const char* axis, const std::array<GroupRange, kGroups>& groups) {
    for (std::size_t i = 0; i < groups.size(); ++i) {
      out << axis << ',' << i << ',' << graphs::format_weight(groups[i].min) << ','
          << graphs::format_weight(groups[i].max) << ',' << groups[i].size << '\n';
    }
  };
  emit("p_ab", grid.ab_groups);
  emit("p_ba", grid.ba_groups);
  if (grid.epsilon) {
    out << "asymmetric," << graphs::format_weight(*grid.epsilon) << ",,," << grid.asymmetric_pairs << '\n';
  }
}

}  // namespace causalrec::stats
