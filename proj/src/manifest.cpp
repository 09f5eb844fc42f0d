#include "causalrec/manifest.h"

#include <chrono>
#include <ctime>

#include "causalrec/io.h"

namespace causalrec {

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : inputs) j["inputs"][k] = v;
  j["outputs"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : outputs) j["outputs"][k] = v;
  j["wall_time_seconds"] = wall_time_seconds;
  j["finished_at"] = finished_at;
  return j;
}

void RunManifest::add_input(const std::string& label, const std::filesystem::path& path) {
  inputs.emplace_back(label, io::sha256_file(path));
}

void RunManifest::add_output(const std::string& label, const std::filesystem::path& path) {
  outputs.emplace_back(label, io::sha256_file(path));
}

void RunManifest::write(const std::filesystem::path& path) const {
  const std::string text = to_json().dump(2) + "\n";
  io::write_atomic(path, [&](std::ostream& out) { out << text; });
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace causalrec
