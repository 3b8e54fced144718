#include "gtsp/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gtsp/errors.hpp"

namespace gtsp::nn {
namespace {

constexpr const char* kMagic = "GTSP-CHECKPOINT";
constexpr int kVersion = 1;

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& values, const std::string& what) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw ParseError("checkpoint: truncated data block while reading " + what);
}

std::string expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint: missing header line '" + key + "'");
  if (line.rfind(key + " ", 0) != 0) {
    throw ParseError("checkpoint: expected header line '" + key + " ...', got '" + line + "'");
  }
  return line.substr(key.size() + 1);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterStore& store, CheckpointHeader header) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "precision f64\n";
  out << "endian little\n";
  out << "seed " << header.seed << '\n';
  out << "epoch " << header.epoch << '\n';
  out << "adam_steps " << header.adam_steps << '\n';
  out << "optimizer_state " << (header.optimizer_state ? 1 : 0) << '\n';
  out << "config " << header.config_json << '\n';
  out << "params " << store.size() << '\n';
  for (const auto& p : store) {
    out << p.name << ' ' << p.value.shape.size();
    for (std::size_t d : p.value.shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  for (const auto& p : store) write_doubles(out, p.value.values);
  if (header.optimizer_state) {
    for (const auto& p : store) write_doubles(out, p.m);
    for (const auto& p : store) write_doubles(out, p.v);
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const CheckpointHeader& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path.string() + "' for writing");
  write_checkpoint(out, store, header);
  if (!out) throw IoError("write failure on checkpoint '" + path.string() + "'");
}

CheckpointHeader read_checkpoint_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint: empty file");
  std::istringstream magic(line);
  std::string word;
  int version = 0;
  magic >> word >> version;
  if (word != kMagic) throw ParseError("checkpoint: bad magic '" + line + "'");
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  if (expect_line(in, "precision") != "f64") throw ParseError("checkpoint: only f64 precision is supported");
  if (expect_line(in, "endian") != "little") throw ParseError("checkpoint: only little-endian data is supported");
  CheckpointHeader h;
  try {
    h.seed = std::stoull(expect_line(in, "seed"));
    h.epoch = std::stoi(expect_line(in, "epoch"));
    h.adam_steps = std::stoull(expect_line(in, "adam_steps"));
    h.optimizer_state = std::stoi(expect_line(in, "optimizer_state")) != 0;
  } catch (const std::logic_error&) {
    throw ParseError("checkpoint: malformed numeric header field");
  }
  h.config_json = expect_line(in, "config");
  const std::size_t count = std::stoull(expect_line(in, "params"));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError("checkpoint: parameter list ends early");
    std::istringstream row(line);
    std::string name;
    std::size_t rank = 0;
    row >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) row >> d;
    if (!row) throw ParseError("checkpoint: malformed parameter line '" + line + "'");
    h.params.emplace_back(std::move(name), std::move(shape));
  }
  if (!std::getline(in, line) || line != "data") throw ParseError("checkpoint: missing 'data' marker");
  return h;
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint_header(in);
}

CheckpointHeader read_checkpoint(std::istream& in, ParameterStore& store) {
  CheckpointHeader h = read_checkpoint_header(in);
  if (h.params.size() != store.size()) {
    throw ValidationError("checkpoint: holds " + std::to_string(h.params.size()) + " parameters, model has " +
                          std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (h.params[i].first != store[i].name || h.params[i].second != store[i].value.shape) {
      throw ValidationError("checkpoint: parameter " + std::to_string(i) + " is '" + h.params[i].first + "' " +
                            shape_string(h.params[i].second) + ", model expects '" + store[i].name + "' " +
                            shape_string(store[i].value.shape));
    }
  }
  for (auto& p : store) read_doubles(in, p.value.values, p.name);
  if (h.optimizer_state) {
    for (auto& p : store) read_doubles(in, p.m, p.name + " (first moment)");
    for (auto& p : store) read_doubles(in, p.v, p.name + " (second moment)");
    store.adam_steps = h.adam_steps;
  }
  return h;
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in, store);
}

}  // namespace gtsp::nn
