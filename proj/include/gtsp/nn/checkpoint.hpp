#pragma once

// Checkpoint layout (version 1):
//
//   GTSP-CHECKPOINT 1\n
//   precision f64\n
//   endian little\n
//   seed <u64>\n
//   epoch <int>\n
//   adam_steps <u64>\n
//   optimizer_state <0|1>\n
//   config <one-line JSON>\n
//   params <count>\n
//   <name> <rank> <dim0> ... <dimN>\n        (one line per parameter, store order)
//   data\n
//   <raw little-endian doubles: every parameter's values in order, then, when
//    optimizer_state is 1, every first moment, then every second moment>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gtsp/nn/params.hpp"

namespace gtsp::nn {

struct CheckpointHeader {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::uint64_t adam_steps = 0;
  bool optimizer_state = false;
  std::string config_json = "{}";
  std::vector<std::pair<std::string, Shape>> params;
};

void write_checkpoint(std::ostream& out, const ParameterStore& store, CheckpointHeader header);
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const CheckpointHeader& header);

// Parses the textual header and leaves the stream at the start of the data block.
CheckpointHeader read_checkpoint_header(std::istream& in);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Loads values (and optimizer state when present) into a store whose names and
// shapes match the header exactly; throws ValidationError otherwise.
CheckpointHeader read_checkpoint(std::istream& in, ParameterStore& store);
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterStore& store);

}  // namespace gtsp::nn
