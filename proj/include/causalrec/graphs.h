#pragma once

// Item graphs derived from training sessions.
//
//   SessionGraph      contiguous transition counts (pairs and triples)
//   effect graph      transition strength with common-cause triples removed
//   cause graph       the effect graph with every edge reversed
//   CorrelationGraph  undirected first-order weight plus raw chain / fork /
//                     collider components; the trainable mix of the
//                     second-order channels is applied by the model

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "causalrec/ingest.h"

namespace causalrec::graphs {

using Count = std::uint64_t;

struct Neighbor {
  ItemIndex item = 0;
  Count count = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

class SessionGraph {
 public:
  // Throws std::invalid_argument for an item index >= num_items or a
  // self-transition (sessions must have consecutive repeats collapsed).
  static SessionGraph build(std::span<const ingest::Session> sessions, std::size_t num_items);

  std::size_t num_items() const { return out_.size(); }
  Count pair_count(ItemIndex from, ItemIndex to) const;
  // Occurrences of the contiguous subsequence [k, i, j].
  Count triple_count(ItemIndex k, ItemIndex i, ItemIndex j) const;
  // Sum over predecessors k of item i that also directly precede j in the
  // graph of triple_count(k, i, j).
  Count common_cause_count(ItemIndex i, ItemIndex j) const;
  Count out_total(ItemIndex i) const { return out_total_[i]; }
  Count in_total(ItemIndex i) const { return in_total_[i]; }
  // Sorted by item index.
  const std::vector<Neighbor>& out_neighbors(ItemIndex i) const { return out_[i]; }
  const std::vector<Neighbor>& in_neighbors(ItemIndex i) const { return in_[i]; }
  std::size_t num_edges() const;

  // Triples keyed (i, j, k) so all predecessors of one (i, j) are contiguous.
  const std::map<std::array<ItemIndex, 3>, Count>& triples() const { return triples_; }

  friend bool operator==(const SessionGraph&, const SessionGraph&) = default;

 private:
  std::vector<std::vector<Neighbor>> out_;
  std::vector<std::vector<Neighbor>> in_;
  std::vector<Count> out_total_;
  std::vector<Count> in_total_;
  std::map<std::array<ItemIndex, 3>, Count> triples_;
};

struct WeightedEdge {
  ItemIndex src = 0;
  ItemIndex dst = 0;
  double weight = 0.0;

  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct WeightedDigraph {
  std::size_t num_items = 0;
  // Sorted by (src, dst).
  std::vector<WeightedEdge> edges;

  // Weight of src -> dst, or -1 when the edge is absent.
  double weight(ItemIndex src, ItemIndex dst) const;
  friend bool operator==(const WeightedDigraph&, const WeightedDigraph&) = default;
};

struct EffectOptions {
  // Skip the common-cause subtraction (numerator = raw pair count).
  bool keep_common_cause = false;
  // Every causal edge gets weight 1.
  bool unit_weights = false;
  // Also add two-hop edges i -> j weighted by sum_k w(i,k) w(k,j) where no
  // direct edge exists.
  bool second_order = false;
};

WeightedDigraph effect_graph(const SessionGraph& g, const EffectOptions& options = {});
WeightedDigraph cause_graph(const WeightedDigraph& effect);

struct CorrelationEdge {
  ItemIndex a = 0;  // a < b
  ItemIndex b = 0;
  double first_order = 0.0;
  double chain = 0.0;
  double fork = 0.0;
  double collider = 0.0;

  friend bool operator==(const CorrelationEdge&, const CorrelationEdge&) = default;
};

struct CorrelationGraph {
  std::size_t num_items = 0;
  // Sorted by (a, b).
  std::vector<CorrelationEdge> edges;

  const CorrelationEdge* find(ItemIndex x, ItemIndex y) const;
  friend bool operator==(const CorrelationGraph&, const CorrelationGraph&) = default;
};

CorrelationGraph correlation_graph(const SessionGraph& g);

// CSV exports. `names` maps item indices to printed ids; empty prints indices.
// Weights use 12 significant digits.
void write_session_csv(std::ostream& out, const SessionGraph& g, std::span<const std::string> names = {});
void write_digraph_csv(std::ostream& out, const WeightedDigraph& g, std::span<const std::string> names = {});
void write_correlation_csv(std::ostream& out, const CorrelationGraph& g,
                           std::span<const std::string> names = {});
std::string format_weight(double w);

}  // namespace causalrec::graphs
