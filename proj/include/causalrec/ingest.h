#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace causalrec {

using ItemIndex = std::uint32_t;

namespace ingest {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  EmptyDatasetError() : std::runtime_error("empty dataset") {}
};

struct Interaction {
  std::string session_id;
  std::int64_t timestamp = 0;
  std::string item_id;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Session before vocabulary assignment.
struct RawSession {
  std::string id;
  std::int64_t start_time = 0;
  std::vector<std::string> items;

  friend bool operator==(const RawSession&, const RawSession&) = default;
};

struct Session {
  std::string id;
  std::int64_t start_time = 0;
  std::vector<ItemIndex> items;

  std::size_t length() const { return items.size(); }
  friend bool operator==(const Session&, const Session&) = default;
};

class Vocabulary {
 public:
  // Returns the existing index when `item_id` is already present.
  ItemIndex add(const std::string& item_id);
  std::optional<ItemIndex> find(const std::string& item_id) const;
  ItemIndex index_of(const std::string& item_id) const;
  const std::string& id_of(ItemIndex index) const;
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.ids_ == b.ids_; }

 private:
  std::unordered_map<std::string, ItemIndex> index_;
  std::vector<std::string> ids_;
};

struct SplitSpec {
  enum class Mode { kLastFraction, kLastPeriod };
  Mode mode = Mode::kLastFraction;
  double fraction = 0.2;
  std::int64_t period_seconds = 0;

  static SplitSpec last_fraction(double fraction);
  static SplitSpec last_period(std::int64_t seconds);
  // "last:0.2" or "period:604800".
  static SplitSpec parse(const std::string& text);
  std::string to_string() const;
};

enum class SessionKey {
  kSessionId,  // group by the session_id column
  kUserDay,    // session_id is a user id; one session per user per UTC day
};

struct PreprocessConfig {
  std::size_t min_item_freq = 5;
  std::size_t min_len = 2;
  std::optional<std::size_t> max_len;
  // Keep only the most frequent items (ties by item id), applied before the
  // frequency threshold.
  std::optional<std::size_t> top_items;
  SplitSpec split;
  bool iterate_to_fixpoint = true;
};

struct Dataset {
  std::vector<Session> train;
  std::vector<Session> test;
  Vocabulary vocab;
};

struct Sample {
  std::vector<ItemIndex> prefix;
  ItemIndex target = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// TAB-separated `session_id, timestamp, item_id` lines; '#' lines and blank
// lines are skipped.
std::vector<Interaction> parse_log(std::istream& in);

std::vector<RawSession> sessionize(std::span<const Interaction> interactions,
                                   SessionKey key = SessionKey::kSessionId);

Dataset preprocess(std::span<const RawSession> sessions, const PreprocessConfig& config);

std::vector<Sample> augment_prefixes(std::span<const Session> sessions);

// Sessions as RawSessions with their item ids resolved through `vocab`.
std::vector<RawSession> to_raw(std::span<const Session> sessions, const Vocabulary& vocab);

// Processed session file: `session_id<TAB>i,j,k` per line. Start times are not
// stored; readers assign the line number so the file order is the time order.
void write_sessions(std::ostream& out, std::span<const Session> sessions);
std::vector<Session> read_sessions(std::istream& in, std::size_t num_items);

// Vocabulary file: `item_index<TAB>item_id` per line.
void write_vocabulary(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocabulary(std::istream& in);

}  // namespace ingest
}  // namespace causalrec
