#include "causalrec/ingest.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <unordered_set>

namespace causalrec::ingest {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

template <typename T>
void collapse_repeats(std::vector<T>& items) {
  items.erase(std::unique(items.begin(), items.end()), items.end());
}

bool length_ok(std::size_t len, const PreprocessConfig& config) {
  if (len < config.min_len) return false;
  if (config.max_len && len > *config.max_len) return false;
  return true;
}

Dataset preprocess_pass(std::span<const RawSession> sessions, const PreprocessConfig& config) {
  std::map<std::string, std::size_t> freq;
  for (const auto& s : sessions)
    for (const auto& item : s.items) ++freq[item];

  std::unordered_set<std::string> keep;
  if (config.top_items) {
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto& [item, count] : freq) ranked.emplace_back(count, item);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (ranked.size() > *config.top_items) ranked.resize(*config.top_items);
    for (auto& [count, item] : ranked) {
      if (count >= config.min_item_freq) keep.insert(item);
    }
  } else {
    for (const auto& [item, count] : freq) {
      if (count >= config.min_item_freq) keep.insert(item);
    }
  }

  std::vector<RawSession> kept;
  for (const auto& s : sessions) {
    RawSession r{s.id, s.start_time, {}};
    for (const auto& item : s.items) {
      if (keep.contains(item)) r.items.push_back(item);
    }
    collapse_repeats(r.items);
    if (length_ok(r.items.size(), config)) kept.push_back(std::move(r));
  }
  std::sort(kept.begin(), kept.end(), [](const RawSession& a, const RawSession& b) {
    return a.start_time != b.start_time ? a.start_time < b.start_time : a.id < b.id;
  });

  std::size_t n_train = kept.size();
  if (config.split.mode == SplitSpec::Mode::kLastFraction) {
    const auto n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(kept.size()) * config.split.fraction + 1e-9));
    n_train = kept.size() - std::min(n_test, kept.size());
  } else if (!kept.empty()) {
    const std::int64_t cutoff = kept.back().start_time - config.split.period_seconds;
    n_train = 0;
    while (n_train < kept.size() && kept[n_train].start_time <= cutoff) ++n_train;
  }
  if (n_train == 0) throw EmptyDatasetError();

  Dataset out;
  for (std::size_t i = 0; i < n_train; ++i) {
    Session s{kept[i].id, kept[i].start_time, {}};
    for (const auto& item : kept[i].items) s.items.push_back(out.vocab.add(item));
    out.train.push_back(std::move(s));
  }
  for (std::size_t i = n_train; i < kept.size(); ++i) {
    Session s{kept[i].id, kept[i].start_time, {}};
    for (const auto& item : kept[i].items) {
      if (auto idx = out.vocab.find(item)) s.items.push_back(*idx);
    }
    collapse_repeats(s.items);
    if (length_ok(s.items.size(), config)) out.test.push_back(std::move(s));
  }
  return out;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  return a.train == b.train && a.test == b.test && a.vocab == b.vocab;
}

}  // namespace

ItemIndex Vocabulary::add(const std::string& item_id) {
  const auto [it, inserted] = index_.try_emplace(item_id, static_cast<ItemIndex>(ids_.size()));
  if (inserted) ids_.push_back(item_id);
  return it->second;
}

std::optional<ItemIndex> Vocabulary::find(const std::string& item_id) const {
  const auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ItemIndex Vocabulary::index_of(const std::string& item_id) const {
  if (auto idx = find(item_id)) return *idx;
  throw std::out_of_range("unknown item id: " + item_id);
}

const std::string& Vocabulary::id_of(ItemIndex index) const {
  if (index >= ids_.size()) throw std::out_of_range("item index out of range: " + std::to_string(index));
  return ids_[index];
}

SplitSpec SplitSpec::last_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split fraction must be in [0, 1)");
  }
  return SplitSpec{Mode::kLastFraction, fraction, 0};
}

SplitSpec SplitSpec::last_period(std::int64_t seconds) {
  if (seconds < 0) throw std::invalid_argument("split period must be non-negative");
  return SplitSpec{Mode::kLastPeriod, 0.0, seconds};
}

SplitSpec SplitSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("bad split spec: " + text);
  const std::string mode = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  if (mode == "last") {
    std::size_t used = 0;
    double f = 0.0;
    try {
      f = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size() || arg.empty()) throw std::invalid_argument("bad split fraction: " + arg);
    return last_fraction(f);
  }
  if (mode == "period") {
    auto secs = parse_number<std::int64_t>(arg);
    if (!secs) throw std::invalid_argument("bad split period: " + arg);
    return last_period(*secs);
  }
  throw std::invalid_argument("bad split mode: " + mode);
}

std::string SplitSpec::to_string() const {
  if (mode == Mode::kLastFraction) {
    std::string s = std::to_string(fraction);
    return "last:" + s;
  }
  return "period:" + std::to_string(period_seconds);
}

std::vector<Interaction> parse_log(std::istream& in) {
  std::vector<Interaction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(line_no, "empty session id");
    const auto ts = parse_number<std::int64_t>(fields[1]);
    if (!ts || *ts < 0) throw ParseError(line_no, "bad timestamp '" + std::string(fields[1]) + "'");
    if (fields[2].empty()) throw ParseError(line_no, "empty item id");
    out.push_back({std::string(fields[0]), *ts, std::string(fields[2])});
  }
  return out;
}

std::vector<RawSession> sessionize(std::span<const Interaction> interactions, SessionKey key) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> keys;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& x = interactions[i];
    std::string k = x.session_id;
    if (key == SessionKey::kUserDay) k += "@" + std::to_string(x.timestamp / kSecondsPerDay);
    const auto [it, inserted] = slot.try_emplace(k, keys.size());
    if (inserted) {
      keys.push_back(k);
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }

  std::vector<RawSession> out;
  out.reserve(keys.size());
  for (std::size_t s = 0; s < keys.size(); ++s) {
    auto& idx = members[s];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    RawSession r{keys[s], interactions[idx.front()].timestamp, {}};
    for (const auto i : idx) r.items.push_back(interactions[i].item_id);
    collapse_repeats(r.items);
    out.push_back(std::move(r));
  }
  return out;
}

Dataset preprocess(std::span<const RawSession> sessions, const PreprocessConfig& config) {
  if (sessions.empty()) throw EmptyDatasetError();
  Dataset current = preprocess_pass(sessions, config);
  while (config.iterate_to_fixpoint) {
    auto again_in = to_raw(current.train, current.vocab);
    auto test_raw = to_raw(current.test, current.vocab);
    again_in.insert(again_in.end(), test_raw.begin(), test_raw.end());
    Dataset again = preprocess_pass(again_in, config);
    if (same_dataset(again, current)) break;
    current = std::move(again);
  }
  return current;
}

std::vector<Sample> augment_prefixes(std::span<const Session> sessions) {
  std::vector<Sample> out;
  for (const auto& s : sessions) {
    for (std::size_t k = 1; k < s.items.size(); ++k) {
      out.push_back({std::vector<ItemIndex>(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(k)),
                     s.items[k]});
    }
  }
  return out;
}

std::vector<RawSession> to_raw(std::span<const Session> sessions, const Vocabulary& vocab) {
  std::vector<RawSession> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    RawSession r{s.id, s.start_time, {}};
    for (const auto i : s.items) r.items.push_back(vocab.id_of(i));
    out.push_back(std::move(r));
  }
  return out;
}

void write_sessions(std::ostream& out, std::span<const Session> sessions) {
  for (const auto& s : sessions) {
    out << s.id << '\t';
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (i > 0) out << ',';
      out << s.items[i];
    }
    out << '\n';
  }
}

std::vector<Session> read_sessions(std::istream& in, std::size_t num_items) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) throw ParseError(line_no, "expected session_id<TAB>items");
    Session s{std::string(fields[0]), static_cast<std::int64_t>(line_no - 1), {}};
    for (const auto tok : split(fields[1], ',')) {
      auto idx = parse_number<ItemIndex>(tok);
      if (!idx) throw ParseError(line_no, "bad item index '" + std::string(tok) + "'");
      if (*idx >= num_items) throw ParseError(line_no, "item index " + std::string(tok) + " outside vocabulary");
      s.items.push_back(*idx);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) out << i << '\t' << vocab.ids()[i] << '\n';
}

Vocabulary read_vocabulary(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) throw ParseError(line_no, "expected item_index<TAB>item_id");
    auto idx = parse_number<ItemIndex>(fields[0]);
    if (!idx || *idx != vocab.size()) throw ParseError(line_no, "item indices must be contiguous from 0");
    if (vocab.find(std::string(fields[1]))) throw ParseError(line_no, "duplicate item id");
    vocab.add(std::string(fields[1]));
  }
  return vocab;
}

}  // namespace causalrec::ingest
