#pragma once

// Conditional transition probabilities p(a|b) = #(b -> a) / #(b -> *) and the
// 10 x 10 grid that buckets item pairs by the deciles of p(a|b) and p(b|a).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <ostream>
#include <vector>

#include "causalrec/graphs.h"

namespace causalrec::stats {

inline constexpr std::size_t kGroups = 10;

// Throws std::domain_error("no outgoing transitions") when b never transitions.
double pab(const graphs::SessionGraph& g, ItemIndex a, ItemIndex b);

enum class Orientation {
  kSmallerFirst,  // a is the smaller item index
  kLargerFirst,
};

struct PairProbability {
  ItemIndex a = 0;
  ItemIndex b = 0;
  double p_ab = 0.0;  // p(a|b)
  double p_ba = 0.0;  // p(b|a)
};

// Unordered pairs joined by at least one transition in either direction with
// both items having outgoing transitions, sorted lexicographically.
std::vector<PairProbability> analyzed_pairs(const graphs::SessionGraph& g,
                                            Orientation orientation = Orientation::kSmallerFirst);

struct GroupRange {
  double min = 0.0;
  double max = 0.0;
  std::size_t size = 0;
};

struct GridOptions {
  Orientation orientation = Orientation::kSmallerFirst;
  // When set, also count pairs with |p(a|b) - p(b|a)| >= epsilon.
  std::optional<double> epsilon;
};

struct AsymmetryGrid {
  // counts[row][col]: row = decile group of p(a|b), col = decile group of p(b|a).
  std::array<std::array<std::uint64_t, kGroups>, kGroups> counts{};
  std::array<GroupRange, kGroups> ab_groups{};
  std::array<GroupRange, kGroups> ba_groups{};
  std::size_t pairs = 0;
  std::optional<double> epsilon;
  std::size_t asymmetric_pairs = 0;

  std::uint64_t total() const;
};

// Group of the pair at ascending position r out of n: r * 10 / n, so group
// sizes differ by at most one.
std::size_t group_of(std::size_t rank, std::size_t n);

// Throws std::invalid_argument with fewer than 10 analyzed pairs.
AsymmetryGrid build_grid(const graphs::SessionGraph& g, const GridOptions& options = {});
AsymmetryGrid build_grid(std::span<const PairProbability> pairs, const GridOptions& options = {});

// 10 lines of 10 comma-separated counts.
void write_grid_csv(std::ostream& out, const AsymmetryGrid& grid);
// axis,group,min,max,size rows; an epsilon summary row when requested.
void write_boundaries_csv(std::ostream& out, const AsymmetryGrid& grid);

}  // namespace causalrec::stats
