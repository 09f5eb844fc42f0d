#pragma once

#include <string>
#include <vector>

#include "causalrec/ingest.h"

namespace causalrec::fixtures {

// Three sessions over items 1..5 (index = id - 1):
//   1 2 3 5 4 / 2 3 5 / 1 3 2
inline std::vector<ingest::Session> fixture_sessions() {
  return {
      {"a", 0, {0, 1, 2, 4, 3}},
      {"b", 1, {1, 2, 4}},
      {"c", 2, {0, 2, 1}},
  };
}

inline constexpr std::size_t kFixtureItems = 5;

// phone=0 lens=1 charger=2 shell=3
inline std::vector<ingest::Session> phone_sessions() {
  return {
      {"p1", 0, {0, 1, 2, 3}},
      {"p2", 1, {0, 2, 1}},
      {"p3", 2, {0, 1, 3}},
  };
}

inline constexpr std::size_t kPhoneItems = 4;

inline ingest::Vocabulary numbered_vocab(std::size_t n, const std::string& prefix = "i") {
  ingest::Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.add(prefix + std::to_string(i));
  return v;
}

}  // namespace causalrec::fixtures
