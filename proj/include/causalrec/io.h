#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

namespace causalrec::io {

// Streams into `<path>.tmp.<pid>` and renames it over `path` once the writer
// returns and the stream flushed cleanly. Nothing is left behind on failure.
void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer,
                  bool binary = false);

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

}  // namespace causalrec::io
