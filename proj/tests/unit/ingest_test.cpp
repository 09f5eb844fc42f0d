#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "causalrec/ingest.h"
#include "fixtures.h"

using namespace causalrec;
using namespace causalrec::ingest;

namespace {

std::vector<Interaction> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_log(in);
}

PreprocessConfig loose(double test_fraction = 0.0) {
  PreprocessConfig c;
  c.min_item_freq = 1;
  c.split = SplitSpec::last_fraction(test_fraction);
  return c;
}

// Random log: sessions of random length over a skewed item distribution.
std::vector<RawSession> random_sessions(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::geometric_distribution<int> item(0.15);
  std::uniform_int_distribution<int> len(1, 7);
  std::vector<RawSession> out;
  for (std::size_t s = 0; s < count; ++s) {
    RawSession r{"s" + std::to_string(s), static_cast<std::int64_t>(rng() % 1000), {}};
    const int l = len(rng);
    for (int k = 0; k < l; ++k) {
      std::string id = "v" + std::to_string(item(rng));
      if (r.items.empty() || r.items.back() != id) r.items.push_back(id);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST(ParseLog, WellFormedLine) {
  const auto log = parse("s1\t100\ta\n");
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0], (Interaction{"s1", 100, "a"}));
}

TEST(ParseLog, EmptyInputIsEmptyList) { EXPECT_TRUE(parse("").empty()); }

TEST(ParseLog, MissingFieldReportsLine) {
  try {
    parse("s1\t100");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  try {
    parse("# header\ns1\t1\ta\ns2\tx\tb\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseLog, CommentsAndCrlfAreTolerated) {
  const auto log = parse("# comment\r\ns1\t5\ta\r\n\ns1\t6\tb\n");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].item_id, "a");
  EXPECT_EQ(log[1].item_id, "b");
}

TEST(ParseLog, NegativeTimestampRejected) { EXPECT_THROW(parse("s\t-1\ta\n"), ParseError); }

TEST(Sessionize, SortsByTimestamp) {
  const std::vector<Interaction> log{{"s1", 2, "b"}, {"s1", 1, "a"}};
  const auto s = sessionize(log);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].items, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(s[0].start_time, 1);
}

TEST(Sessionize, CollapsesConsecutiveDuplicatesOnly) {
  const std::vector<Interaction> log{{"s1", 1, "a"}, {"s1", 2, "a"}, {"s1", 3, "b"}, {"s1", 4, "a"}};
  EXPECT_EQ(sessionize(log)[0].items, (std::vector<std::string>{"a", "b", "a"}));
}

TEST(Sessionize, GroupsBySessionKey) {
  const std::vector<Interaction> log{{"s1", 1, "a"}, {"s2", 1, "c"}};
  const auto s = sessionize(log);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].items, std::vector<std::string>{"a"});
  EXPECT_EQ(s[1].items, std::vector<std::string>{"c"});
}

TEST(Sessionize, TiesKeepInputOrder) {
  const std::vector<Interaction> log{{"s1", 5, "x"}, {"s1", 5, "y"}, {"s1", 5, "z"}};
  EXPECT_EQ(sessionize(log)[0].items, (std::vector<std::string>{"x", "y", "z"}));
}

TEST(Sessionize, UserDayKeySplitsAcrossDays) {
  const std::vector<Interaction> log{{"u", 10, "a"}, {"u", 20, "b"}, {"u", 86400 + 5, "c"}, {"u", 86400 + 9, "d"}};
  const auto s = sessionize(log, SessionKey::kUserDay);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].items, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(s[1].items, (std::vector<std::string>{"c", "d"}));
}

TEST(Preprocess, FixtureKeepsEverything) {
  const auto raw = to_raw(fixtures::fixture_sessions(), fixtures::numbered_vocab(5, "v"));
  const auto ds = preprocess(raw, loose());
  EXPECT_EQ(ds.train.size(), 3u);
  EXPECT_TRUE(ds.test.empty());
  EXPECT_EQ(ds.vocab.size(), 5u);
}

TEST(Preprocess, FrequencyFilterCanEmptyTheDataset) {
  const std::vector<RawSession> raw{{"s", 0, {"a", "b"}}};
  PreprocessConfig c;
  c.min_item_freq = 5;
  EXPECT_THROW(preprocess(raw, c), EmptyDatasetError);
  EXPECT_THROW(preprocess(std::vector<RawSession>{}, c), EmptyDatasetError);
}

TEST(Preprocess, LastFractionSplitsByStartTime) {
  std::vector<RawSession> raw;
  for (int i = 9; i >= 0; --i) raw.push_back({"s" + std::to_string(i), i * 10, {"a", "b"}});
  const auto ds = preprocess(raw, loose(0.2));
  ASSERT_EQ(ds.train.size(), 8u);
  ASSERT_EQ(ds.test.size(), 2u);
  EXPECT_EQ(ds.test[0].id, "s8");
  EXPECT_EQ(ds.test[1].id, "s9");
  for (const auto& s : ds.train) EXPECT_LT(s.start_time, ds.test[0].start_time);
}

TEST(Preprocess, StartTimeTiesBreakOnSessionId) {
  const std::vector<RawSession> raw{{"b", 0, {"x", "y"}}, {"a", 0, {"x", "y"}}, {"c", 0, {"x", "y"}}};
  const auto ds = preprocess(raw, loose());
  EXPECT_EQ(ds.train[0].id, "a");
  EXPECT_EQ(ds.train[2].id, "c");
}

TEST(Preprocess, PeriodSplit) {
  const std::vector<RawSession> raw{{"a", 0, {"x", "y"}}, {"b", 100, {"x", "y"}}, {"c", 200, {"y", "x"}}};
  auto c = loose();
  c.split = SplitSpec::parse("period:150");
  const auto ds = preprocess(raw, c);
  EXPECT_EQ(ds.train.size(), 1u);
  EXPECT_EQ(ds.test.size(), 2u);
}

TEST(Preprocess, LengthBounds) {
  const std::vector<RawSession> raw{{"a", 0, {"x", "y", "z"}}, {"b", 1, {"x", "y"}}, {"c", 2, {"z"}}};
  auto c = loose();
  c.max_len = 2;
  const auto ds = preprocess(raw, c);
  ASSERT_EQ(ds.train.size(), 1u);
  EXPECT_EQ(ds.train[0].id, "b");
}

TEST(Preprocess, UnknownTestItemsAreDropped) {
  const std::vector<RawSession> raw{
      {"a", 0, {"x", "y"}}, {"b", 1, {"x", "y"}}, {"c", 2, {"x", "new", "y"}}, {"d", 3, {"x", "new"}}};
  auto c = loose(0.5);
  const auto ds = preprocess(raw, c);
  ASSERT_EQ(ds.test.size(), 1u);  // d collapses to length 1 and is dropped
  EXPECT_EQ(ds.test[0].items.size(), 2u);
  EXPECT_FALSE(ds.vocab.find("new").has_value());
}

TEST(Preprocess, NoTestLeakage) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PreprocessConfig c;
    c.min_item_freq = 3;
    c.split = SplitSpec::last_fraction(0.3);
    const auto ds = preprocess(random_sessions(seed, 300), c);
    std::set<ItemIndex> train_items;
    for (const auto& s : ds.train) train_items.insert(s.items.begin(), s.items.end());
    EXPECT_EQ(train_items.size(), ds.vocab.size());
    for (const auto& s : ds.test) {
      EXPECT_GE(s.items.size(), 2u);
      for (const auto i : s.items) EXPECT_TRUE(train_items.contains(i));
    }
  }
}

TEST(Preprocess, Idempotent) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PreprocessConfig c;
    c.min_item_freq = 4;
    c.split = SplitSpec::last_fraction(0.2);
    const auto once = preprocess(random_sessions(seed, 400), c);
    auto raw = to_raw(once.train, once.vocab);
    const auto test_raw = to_raw(once.test, once.vocab);
    raw.insert(raw.end(), test_raw.begin(), test_raw.end());
    const auto twice = preprocess(raw, c);
    EXPECT_EQ(twice.train, once.train);
    EXPECT_EQ(twice.test, once.test);
    EXPECT_EQ(twice.vocab, once.vocab);
  }
}

TEST(Preprocess, SessionsHaveNoConsecutiveRepeats) {
  PreprocessConfig c;
  c.min_item_freq = 5;
  const auto ds = preprocess(random_sessions(9, 300), c);
  for (const auto* part : {&ds.train, &ds.test}) {
    for (const auto& s : *part) {
      for (std::size_t k = 1; k < s.items.size(); ++k) EXPECT_NE(s.items[k], s.items[k - 1]);
    }
  }
}

TEST(SplitSpecParse, Forms) {
  EXPECT_EQ(SplitSpec::parse("last:0.2").mode, SplitSpec::Mode::kLastFraction);
  EXPECT_DOUBLE_EQ(SplitSpec::parse("last:0.2").fraction, 0.2);
  EXPECT_EQ(SplitSpec::parse("period:604800").period_seconds, 604800);
  EXPECT_THROW(SplitSpec::parse("last:1.5"), std::invalid_argument);
  EXPECT_THROW(SplitSpec::parse("last:abc"), std::invalid_argument);
  EXPECT_THROW(SplitSpec::parse("first:0.2"), std::invalid_argument);
  EXPECT_THROW(SplitSpec::parse("0.2"), std::invalid_argument);
}

TEST(AugmentPrefixes, Enumeration) {
  const std::vector<Session> one{{"s", 0, {0, 1, 2}}};
  const auto samples = augment_prefixes(one);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0], (Sample{{0}, 1}));
  EXPECT_EQ(samples[1], (Sample{{0, 1}, 2}));
  EXPECT_EQ(augment_prefixes(std::vector<Session>{{"s", 0, {4, 3}}}).size(), 1u);
}

TEST(AugmentPrefixes, CountIsSumOfLengthsMinusOne) {
  EXPECT_EQ(augment_prefixes(fixtures::fixture_sessions()).size(), 8u);
}

TEST(SessionFiles, RoundTrip) {
  const auto sessions = fixtures::fixture_sessions();
  std::stringstream io;
  write_sessions(io, sessions);
  EXPECT_EQ(io.str(), "a\t0,1,2,4,3\nb\t1,2,4\nc\t0,2,1\n");
  const auto back = read_sessions(io, 5);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, sessions[i].id);
    EXPECT_EQ(back[i].items, sessions[i].items);
    EXPECT_EQ(back[i].start_time, static_cast<std::int64_t>(i));
  }
  std::istringstream bad("a\t0,9\n");
  EXPECT_THROW(read_sessions(bad, 5), ParseError);
}

TEST(VocabularyFiles, RoundTripAndValidation) {
  const auto v = fixtures::numbered_vocab(3);
  std::stringstream io;
  write_vocabulary(io, v);
  EXPECT_EQ(io.str(), "0\ti0\n1\ti1\n2\ti2\n");
  EXPECT_EQ(read_vocabulary(io), v);
  std::istringstream gap("0\ta\n2\tb\n");
  EXPECT_THROW(read_vocabulary(gap), ParseError);
  std::istringstream dup("0\ta\n1\ta\n");
  EXPECT_THROW(read_vocabulary(dup), ParseError);
}

TEST(VocabularyMap, Bijective) {
  Vocabulary v;
  EXPECT_EQ(v.add("x"), 0u);
  EXPECT_EQ(v.add("y"), 1u);
  EXPECT_EQ(v.add("x"), 0u);
  EXPECT_EQ(v.id_of(1), "y");
  EXPECT_EQ(v.index_of("y"), 1u);
  EXPECT_THROW(v.index_of("z"), std::out_of_range);
  EXPECT_THROW(v.id_of(2), std::out_of_range);
}
