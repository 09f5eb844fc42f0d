#pragma once

// Binary checkpoint:
//
//   CGSR1
//   option <key> <value>        model configuration, one line per setting
//   items <N>
//   tensor <name> <rows> <cols> one line per tensor, manifest order
//   data
//   <row-major little-endian float64 payload, tensors in manifest order>

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "causalrec/model.h"

namespace causalrec::checkpoint {

inline constexpr char kMagic[] = "CGSR1";

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  model::ModelConfig config;
  std::size_t num_items = 0;
  model::Parameters params;
};

void save(std::ostream& out, const model::ModelConfig& config, const model::Parameters& params);
Checkpoint load(std::istream& in);

// Written to a temporary sibling and renamed into place.
void save_file(const std::filesystem::path& path, const model::ModelConfig& config,
               const model::Parameters& params);
Checkpoint load_file(const std::filesystem::path& path);

}  // namespace causalrec::checkpoint
