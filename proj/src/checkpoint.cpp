#include "causalrec/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "causalrec/io.h"
#include "causalrec/trainer.h"

namespace causalrec::checkpoint {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

void write_payload(std::ostream& out, const num::Array& a) {
  for (const double d : a.values()) {
    const auto bits = to_little_endian(std::bit_cast<std::uint64_t>(d));
    char buf[8];
    std::memcpy(buf, &bits, sizeof(buf));
    out.write(buf, sizeof(buf));
  }
}

void read_payload(std::istream& in, num::Array& a, const std::string& name) {
  for (auto& d : a.values()) {
    char buf[8];
    if (!in.read(buf, sizeof(buf))) throw FormatError("checkpoint: truncated data for tensor " + name);
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf, sizeof(buf));
    d = std::bit_cast<double>(to_little_endian(bits));
  }
}

}  // namespace

void save(std::ostream& out, const model::ModelConfig& config, const model::Parameters& params) {
  out << kMagic << '\n';
  for (const auto& [key, value] : trainer::model_settings(config)) out << "option " << key << ' ' << value << '\n';
  out << "items " << params.embedding.rows() << '\n';
  model::for_each_param(params, [&](const std::string& name, const num::Array& a) {
    out << "tensor " << name << ' ' << a.rows() << ' ' << a.cols() << '\n';
  });
  out << "data\n";
  model::for_each_param(params, [&](const std::string&, const num::Array& a) { write_payload(out, a); });
}

Checkpoint load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw FormatError("checkpoint: bad magic (expected CGSR1)");

  Checkpoint cp;
  struct Entry {
    std::string name;
    std::size_t rows = 0, cols = 0;
  };
  std::vector<Entry> manifest;
  bool have_items = false;
  bool have_data = false;
  while (std::getline(in, line)) {
    if (line == "data") {
      have_data = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "option") {
      std::string key, value;
      if (!(ls >> key >> value)) throw FormatError("checkpoint: malformed option line: " + line);
      try {
        trainer::apply_model_setting(cp.config, key, value);
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
      }
    } else if (kind == "items") {
      if (!(ls >> cp.num_items)) throw FormatError("checkpoint: malformed items line");
      have_items = true;
    } else if (kind == "tensor") {
      Entry e;
      if (!(ls >> e.name >> e.rows >> e.cols)) throw FormatError("checkpoint: malformed tensor line: " + line);
      manifest.push_back(std::move(e));
    } else {
      throw FormatError("checkpoint: unexpected header line: " + line);
    }
  }
  if (!have_data || !have_items) throw FormatError("checkpoint: incomplete header");

  try {
    cp.params = model::shaped_params(cp.num_items, cp.config);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  std::size_t i = 0;
  model::for_each_param(cp.params, [&](const std::string& name, num::Array& a) {
    if (i >= manifest.size()) throw FormatError("checkpoint: missing tensor " + name);
    const auto& e = manifest[i++];
    if (e.name != name || e.rows != a.rows() || e.cols != a.cols()) {
      throw FormatError("checkpoint: expected tensor " + name + " " + a.shape_string() + ", found " + e.name +
                        " " + std::to_string(e.rows) + "x" + std::to_string(e.cols));
    }
  });
  if (i != manifest.size()) throw FormatError("checkpoint: unexpected extra tensors");
  model::for_each_param(cp.params, [&](const std::string& name, num::Array& a) { read_payload(in, a, name); });
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after data");
  return cp;
}

void save_file(const std::filesystem::path& path, const model::ModelConfig& config,
               const model::Parameters& params) {
  io::write_atomic(path, [&](std::ostream& out) { save(out, config, params); }, true);
}

Checkpoint load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return load(in);
}

}  // namespace causalrec::checkpoint
