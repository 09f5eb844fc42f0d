#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "causalrec/graphs.h"
#include "fixtures.h"

using namespace causalrec;
using namespace causalrec::graphs;

namespace {

SessionGraph fixture_graph() { return SessionGraph::build(fixtures::fixture_sessions(), fixtures::kFixtureItems); }

std::vector<ingest::Session> random_sessions(std::uint64_t seed, std::size_t n_items, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> item(0, n_items - 1);
  std::uniform_int_distribution<int> len(2, 9);
  std::vector<ingest::Session> out;
  for (std::size_t s = 0; s < count; ++s) {
    ingest::Session session{"s" + std::to_string(s), static_cast<std::int64_t>(s), {}};
    const int l = len(rng);
    while (static_cast<int>(session.items.size()) < l) {
      const auto v = static_cast<ItemIndex>(item(rng));
      if (session.items.empty() || session.items.back() != v) session.items.push_back(v);
    }
    out.push_back(std::move(session));
  }
  return out;
}

}  // namespace

TEST(SessionGraph, FixtureCounts) {
  const auto g = fixture_graph();
  EXPECT_EQ(g.pair_count(0, 1), 1u);
  EXPECT_EQ(g.pair_count(0, 2), 1u);
  EXPECT_EQ(g.pair_count(1, 2), 2u);
  EXPECT_EQ(g.pair_count(2, 1), 1u);
  EXPECT_EQ(g.pair_count(2, 4), 2u);
  EXPECT_EQ(g.pair_count(4, 3), 1u);
  EXPECT_EQ(g.num_edges(), 6u);
  EXPECT_EQ(g.out_total(2), 3u);
  EXPECT_EQ(g.in_total(2), 3u);
}

TEST(SessionGraph, SinglePairAndTriple) {
  const auto g = SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {0, 1}}}, 3);
  EXPECT_EQ(g.pair_count(0, 1), 1u);
  EXPECT_TRUE(g.triples().empty());
  const auto h = SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {0, 1, 2}}}, 3);
  EXPECT_EQ(h.triple_count(0, 1, 2), 1u);
  EXPECT_EQ(h.triple_count(1, 0, 2), 0u);
}

TEST(SessionGraph, RejectsBadInput) {
  EXPECT_THROW(SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {0, 7}}}, 3), std::invalid_argument);
  EXPECT_THROW(SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {1, 1}}}, 3), std::invalid_argument);
}

TEST(SessionGraph, CommonCauseBoundedByPairCount) {
  const auto g = SessionGraph::build(random_sessions(4, 12, 300), 12);
  for (ItemIndex i = 0; i < 12; ++i) {
    Count total = 0;
    for (const auto& n : g.out_neighbors(i)) {
      EXPECT_LE(g.common_cause_count(i, n.item), n.count);
      total += n.count;
    }
    EXPECT_EQ(total, g.out_total(i));
  }
}

TEST(EffectGraph, FixtureWeights) {
  const auto e = effect_graph(fixture_graph());
  EXPECT_NEAR(e.weight(0, 1), 1.0 / 2, 1e-15);
  EXPECT_NEAR(e.weight(0, 2), 1.0 / 2, 1e-15);
  EXPECT_NEAR(e.weight(1, 2), 1.0 / 2, 1e-15);
  EXPECT_NEAR(e.weight(2, 1), 0.0, 1e-15);
  EXPECT_NEAR(e.weight(2, 4), 2.0 / 3, 1e-15);
  EXPECT_NEAR(e.weight(4, 3), 1.0, 1e-15);
  EXPECT_EQ(e.edges.size(), 6u);  // the zero-weight edge is kept
}

TEST(EffectGraph, CommonCauseRemoved) {
  const auto g = SessionGraph::build(fixtures::phone_sessions(), fixtures::kPhoneItems);
  EXPECT_EQ(effect_graph(g).weight(2, 3), 0.0);
  EffectOptions keep;
  keep.keep_common_cause = true;
  EXPECT_EQ(effect_graph(g, keep).weight(2, 3), 0.5);
}

TEST(EffectGraph, SinglePairHasWeightOne) {
  const auto g = SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {0, 1}}}, 2);
  EXPECT_EQ(effect_graph(g).weight(0, 1), 1.0);
}

TEST(EffectGraph, UnitWeights) {
  EffectOptions unit;
  unit.unit_weights = true;
  for (const auto& e : effect_graph(fixture_graph(), unit).edges) EXPECT_EQ(e.weight, 1.0);
}

TEST(EffectGraph, SecondOrderAddsTwoHopEdges) {
  EffectOptions sec;
  sec.second_order = true;
  const auto e = effect_graph(fixture_graph(), sec);
  // 2 -> 3 -> 5 (indices 1 -> 2 -> 4): 1/2 * 2/3.
  EXPECT_NEAR(e.weight(1, 4), 0.5 * (2.0 / 3), 1e-15);
  // Direct edges keep their first-order weights.
  EXPECT_NEAR(e.weight(0, 1), 0.5, 1e-15);
  EXPECT_EQ(e.weight(1, 1), -1.0);
}

TEST(EffectGraph, RandomSessionProperties) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = SessionGraph::build(random_sessions(seed, 10, 60), 10);
    const auto e = effect_graph(g);
    std::vector<double> out_sum(10, 0.0);
    std::size_t support = 0;
    for (const auto& edge : e.edges) {
      EXPECT_GE(edge.weight, 0.0);
      EXPECT_LE(edge.weight, 1.0);
      EXPECT_GT(g.pair_count(edge.src, edge.dst), 0u);
      out_sum[edge.src] += edge.weight;
      ++support;
    }
    EXPECT_EQ(support, g.num_edges());
    for (const double s : out_sum) EXPECT_LE(s, 1.0 + 1e-12);
  }
}

TEST(CauseGraph, ReversesFixture) {
  const auto c = cause_graph(effect_graph(fixture_graph()));
  EXPECT_NEAR(c.weight(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(c.weight(2, 0), 0.5, 1e-15);
  EXPECT_NEAR(c.weight(2, 1), 0.5, 1e-15);
  EXPECT_EQ(c.weight(1, 2), 0.0);
  EXPECT_NEAR(c.weight(4, 2), 2.0 / 3, 1e-15);
  EXPECT_EQ(c.weight(3, 4), 1.0);
}

TEST(CauseGraph, EmptyAndInvolution) {
  WeightedDigraph empty{4, {}};
  EXPECT_EQ(cause_graph(empty), empty);
  const auto e = effect_graph(SessionGraph::build(random_sessions(3, 8, 40), 8));
  EXPECT_EQ(cause_graph(cause_graph(e)), e);
}

TEST(CorrelationGraph, FixtureComponents) {
  const auto r = correlation_graph(fixture_graph());
  const auto* e23 = r.find(1, 2);
  ASSERT_NE(e23, nullptr);
  EXPECT_NEAR(e23->first_order, 1.2, 1e-15);
  const auto* e15 = r.find(4, 0);
  ASSERT_NE(e15, nullptr);
  EXPECT_EQ(e15->first_order, 0.0);
  EXPECT_NEAR(e15->chain, 0.75, 1e-15);
  EXPECT_EQ(e15->fork, 0.0);
  EXPECT_EQ(e15->collider, 0.0);
}

TEST(CorrelationGraph, SingleEdge) {
  const auto r = correlation_graph(SessionGraph::build(std::vector<ingest::Session>{{"s", 0, {0, 1}}}, 2));
  ASSERT_EQ(r.edges.size(), 1u);
  EXPECT_EQ(r.edges[0].first_order, 1.0);
  EXPECT_EQ(r.edges[0].chain + r.edges[0].fork + r.edges[0].collider, 0.0);
}

TEST(CorrelationGraph, ForkAndCollider) {
  // 0 -> 1 and 0 -> 2: fork between 1 and 2. 3 -> 5 and 4 -> 5: collider between 3 and 4.
  const std::vector<ingest::Session> s{{"a", 0, {0, 1}}, {"b", 1, {0, 2}}, {"c", 2, {3, 5}}, {"d", 3, {4, 5}}};
  const auto r = correlation_graph(SessionGraph::build(s, 6));
  const auto* fork = r.find(1, 2);
  ASSERT_NE(fork, nullptr);
  EXPECT_DOUBLE_EQ(fork->fork, (1.0 + 1.0) / (1.0 + 1.0));
  EXPECT_EQ(fork->first_order, 0.0);
  const auto* coll = r.find(3, 4);
  ASSERT_NE(coll, nullptr);
  EXPECT_DOUBLE_EQ(coll->collider, 1.0);
  EXPECT_EQ(r.find(0, 5), nullptr);
}

TEST(CorrelationGraph, Properties) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = SessionGraph::build(random_sessions(seed, 10, 40), 10);
    const auto r = correlation_graph(g);
    for (const auto& e : r.edges) {
      EXPECT_LT(e.a, e.b);
      EXPECT_EQ(r.find(e.a, e.b), r.find(e.b, e.a));
      EXPECT_GE(e.first_order, 0.0);
      EXPECT_GE(e.chain, 0.0);
      EXPECT_GE(e.fork, 0.0);
      EXPECT_GE(e.collider, 0.0);
      EXPECT_EQ(e.first_order > 0.0, g.pair_count(e.a, e.b) + g.pair_count(e.b, e.a) > 0);
      EXPECT_GT(e.first_order + e.chain + e.fork + e.collider, 0.0);
    }
  }
}

TEST(Graphs, SessionOrderDoesNotMatter) {
  auto sessions = random_sessions(11, 15, 120);
  const auto g1 = SessionGraph::build(sessions, 15);
  std::mt19937_64 rng(2);
  std::shuffle(sessions.begin(), sessions.end(), rng);
  const auto g2 = SessionGraph::build(sessions, 15);
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(effect_graph(g1), effect_graph(g2));
  EXPECT_EQ(correlation_graph(g1), correlation_graph(g2));
}

TEST(GraphCsv, EffectExportListsWeights) {
  const auto e = effect_graph(fixture_graph());
  const std::vector<std::string> names{"1", "2", "3", "4", "5"};
  std::ostringstream out;
  write_digraph_csv(out, e, names);
  EXPECT_EQ(out.str(),
            "src,dst,weight\n1,2,0.5\n1,3,0.5\n2,3,0.5\n3,2,0\n3,5,0.666666666667\n5,4,1\n");
}

TEST(GraphCsv, CorrelationAndSessionExport) {
  std::ostringstream corr, sess;
  write_correlation_csv(corr, correlation_graph(fixture_graph()));
  EXPECT_EQ(corr.str().substr(0, corr.str().find('\n')), "a,b,w1,chain,fork,collider");
  EXPECT_NE(corr.str().find("\n1,2,1.2,"), std::string::npos);
  write_session_csv(sess, fixture_graph());
  EXPECT_NE(sess.str().find("\n1,2,2\n"), std::string::npos);
}
