#include "causalrec/graphs.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace causalrec::graphs {

namespace {

Count lookup(const std::vector<Neighbor>& list, ItemIndex item) {
  const auto it = std::lower_bound(list.begin(), list.end(), item,
                                   [](const Neighbor& n, ItemIndex v) { return n.item < v; });
  return it != list.end() && it->item == item ? it->count : 0;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Sum over k in A ∩ B of (a.count + b.count), lists sorted by item.
double intersect_sum(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
  double total = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->item < ib->item) {
      ++ia;
    } else if (ib->item < ia->item) {
      ++ib;
    } else {
      total += static_cast<double>(ia->count + ib->count);
      ++ia;
      ++ib;
    }
  }
  return total;
}

std::string name_of(ItemIndex i, std::span<const std::string> names) {
  return names.empty() ? std::to_string(i) : names[i];
}

}  // namespace

SessionGraph SessionGraph::build(std::span<const ingest::Session> sessions, std::size_t num_items) {
  std::map<std::pair<ItemIndex, ItemIndex>, Count> pairs;
  SessionGraph g;
  for (const auto& s : sessions) {
    for (std::size_t p = 0; p < s.items.size(); ++p) {
      if (s.items[p] >= num_items) {
        throw std::invalid_argument("session " + s.id + ": item index " + std::to_string(s.items[p]) +
                                    " >= " + std::to_string(num_items));
      }
      if (p == 0) continue;
      const ItemIndex i = s.items[p - 1];
      const ItemIndex j = s.items[p];
      if (i == j) throw std::invalid_argument("session " + s.id + ": consecutive repeated item");
      ++pairs[{i, j}];
      if (p >= 2) ++g.triples_[{i, j, s.items[p - 2]}];
    }
  }
  g.out_.assign(num_items, {});
  g.in_.assign(num_items, {});
  g.out_total_.assign(num_items, 0);
  g.in_total_.assign(num_items, 0);
  // std::map iterates (i, j) ascending, so both adjacency lists come out sorted.
  for (const auto& [key, count] : pairs) {
    const auto [i, j] = key;
    g.out_[i].push_back({j, count});
    g.in_[j].push_back({i, count});
    g.out_total_[i] += count;
    g.in_total_[j] += count;
  }
  return g;
}

Count SessionGraph::pair_count(ItemIndex from, ItemIndex to) const {
  if (from >= out_.size()) return 0;
  return lookup(out_[from], to);
}

Count SessionGraph::triple_count(ItemIndex k, ItemIndex i, ItemIndex j) const {
  const auto it = triples_.find({i, j, k});
  return it == triples_.end() ? 0 : it->second;
}

Count SessionGraph::common_cause_count(ItemIndex i, ItemIndex j) const {
  Count total = 0;
  for (auto it = triples_.lower_bound({i, j, 0}); it != triples_.end(); ++it) {
    const auto& [ti, tj, k] = it->first;
    if (ti != i || tj != j) break;
    // k precedes i by construction of the triple; it is a common cause only
    // if it also directly precedes j somewhere.
    if (pair_count(k, j) > 0) total += it->second;
  }
  return total;
}

std::size_t SessionGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& list : out_) n += list.size();
  return n;
}

double WeightedDigraph::weight(ItemIndex src, ItemIndex dst) const {
  const auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{src, dst},
                                   [](const WeightedEdge& e, const std::pair<ItemIndex, ItemIndex>& k) {
                                     return std::pair{e.src, e.dst} < k;
                                   });
  if (it != edges.end() && it->src == src && it->dst == dst) return it->weight;
  return -1.0;
}

WeightedDigraph effect_graph(const SessionGraph& g, const EffectOptions& options) {
  WeightedDigraph out;
  out.num_items = g.num_items();
  for (ItemIndex i = 0; i < g.num_items(); ++i) {
    const Count total = g.out_total(i);
    for (const auto& n : g.out_neighbors(i)) {
      if (total == 0) throw std::logic_error("effect_graph: edge from item with zero out-total");
      Count numerator = n.count;
      if (!options.keep_common_cause) {
        const Count common = g.common_cause_count(i, n.item);
        if (common > numerator) throw std::logic_error("effect_graph: common-cause count exceeds pair count");
        numerator -= common;
      }
      const double w = options.unit_weights
                           ? 1.0
                           : static_cast<double>(numerator) / static_cast<double>(total);
      out.edges.push_back({i, n.item, w});
    }
  }

  if (options.second_order) {
    std::vector<std::vector<WeightedEdge>> by_src(out.num_items);
    for (const auto& e : out.edges) by_src[e.src].push_back(e);
    std::vector<WeightedEdge> extra;
    for (ItemIndex i = 0; i < out.num_items; ++i) {
      std::map<ItemIndex, double> two_hop;
      for (const auto& first : by_src[i]) {
        for (const auto& second : by_src[first.dst]) {
          if (second.dst == i) continue;
          two_hop[second.dst] += first.weight * second.weight;
        }
      }
      for (const auto& [j, w] : two_hop) {
        if (out.weight(i, j) < 0.0) extra.push_back({i, j, options.unit_weights ? 1.0 : w});
      }
    }
    out.edges.insert(out.edges.end(), extra.begin(), extra.end());
    std::sort(out.edges.begin(), out.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
      return std::pair{a.src, a.dst} < std::pair{b.src, b.dst};
    });
  }
  return out;
}

WeightedDigraph cause_graph(const WeightedDigraph& effect) {
  WeightedDigraph out;
  out.num_items = effect.num_items;
  out.edges.reserve(effect.edges.size());
  for (const auto& e : effect.edges) out.edges.push_back({e.dst, e.src, e.weight});
  std::sort(out.edges.begin(), out.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return std::pair{a.src, a.dst} < std::pair{b.src, b.dst};
  });
  return out;
}

const CorrelationEdge* CorrelationGraph::find(ItemIndex x, ItemIndex y) const {
  const ItemIndex a = std::min(x, y);
  const ItemIndex b = std::max(x, y);
  const auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b},
                                   [](const CorrelationEdge& e, const std::pair<ItemIndex, ItemIndex>& k) {
                                     return std::pair{e.a, e.b} < k;
                                   });
  if (it != edges.end() && it->a == a && it->b == b) return &*it;
  return nullptr;
}

CorrelationGraph correlation_graph(const SessionGraph& g) {
  const std::size_t n = g.num_items();
  // Candidate pairs: direct neighbours, plus pairs sharing any neighbour k.
  std::set<std::pair<ItemIndex, ItemIndex>> candidates;
  auto add = [&](ItemIndex x, ItemIndex y) {
    if (x != y) candidates.insert({std::min(x, y), std::max(x, y)});
  };
  for (ItemIndex k = 0; k < n; ++k) {
    std::vector<ItemIndex> around;
    for (const auto& nb : g.in_neighbors(k)) around.push_back(nb.item);
    for (const auto& nb : g.out_neighbors(k)) {
      around.push_back(nb.item);
      add(k, nb.item);
    }
    std::sort(around.begin(), around.end());
    around.erase(std::unique(around.begin(), around.end()), around.end());
    for (std::size_t x = 0; x < around.size(); ++x)
      for (std::size_t y = x + 1; y < around.size(); ++y) add(around[x], around[y]);
  }

  CorrelationGraph out;
  out.num_items = n;
  for (const auto& [i, j] : candidates) {
    const double wij = static_cast<double>(g.pair_count(i, j));
    const double wji = static_cast<double>(g.pair_count(j, i));
    const double out_i = static_cast<double>(g.out_total(i));
    const double out_j = static_cast<double>(g.out_total(j));
    const double in_i = static_cast<double>(g.in_total(i));
    const double in_j = static_cast<double>(g.in_total(j));

    CorrelationEdge e{i, j, 0.0, 0.0, 0.0, 0.0};
    if (wij > 0.0) e.first_order += ratio(2.0 * wij, out_i + in_j);
    if (wji > 0.0) e.first_order += ratio(2.0 * wji, out_j + in_i);
    e.chain = ratio(intersect_sum(g.out_neighbors(i), g.in_neighbors(j)), out_i + in_j) +
              ratio(intersect_sum(g.out_neighbors(j), g.in_neighbors(i)), out_j + in_i);
    e.fork = ratio(intersect_sum(g.in_neighbors(i), g.in_neighbors(j)), in_i + in_j);
    e.collider = ratio(intersect_sum(g.out_neighbors(i), g.out_neighbors(j)), out_i + out_j);
    if (e.first_order > 0.0 || e.chain > 0.0 || e.fork > 0.0 || e.collider > 0.0) {
      out.edges.push_back(e);
    }
  }
  return out;
}

std::string format_weight(double w) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", w);
  return buf;
}

void write_session_csv(std::ostream& out, const SessionGraph& g, std::span<const std::string> names) {
  out << "src,dst,count\n";
  for (ItemIndex i = 0; i < g.num_items(); ++i)
    for (const auto& n : g.out_neighbors(i))
      out << name_of(i, names) << ',' << name_of(n.item, names) << ',' << n.count << '\n';
}

void write_digraph_csv(std::ostream& out, const WeightedDigraph& g, std::span<const std::string> names) {
  out << "src,dst,weight\n";
  for (const auto& e : g.edges)
    out << name_of(e.src, names) << ',' << name_of(e.dst, names) << ',' << format_weight(e.weight) << '\n';
}

void write_correlation_csv(std::ostream& out, const CorrelationGraph& g, std::span<const std::string> names) {
  out << "a,b,w1,chain,fork,collider\n";
  for (const auto& e : g.edges) {
    out << name_of(e.a, names) << ',' << name_of(e.b, names) << ',' << format_weight(e.first_order) << ','
        << format_weight(e.chain) << ',' << format_weight(e.fork) << ',' << format_weight(e.collider) << '\n';
  }
}

}  // namespace causalrec::graphs
