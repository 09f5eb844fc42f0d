#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace causalrec {

inline constexpr char kToolVersion[] = "0.1.0";

// Provenance record written next to every command's outputs.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // flat settings snapshot
  std::vector<std::pair<std::string, std::string>> inputs;  // label -> sha256
  std::vector<std::pair<std::string, std::string>> outputs;
  std::uint64_t seed = 0;
  double wall_time_seconds = 0.0;
  std::string finished_at;  // UTC, ISO 8601

  nlohmann::ordered_json to_json() const;
  void add_input(const std::string& label, const std::filesystem::path& path);
  void add_output(const std::string& label, const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

std::string utc_timestamp();

}  // namespace causalrec
