#pragma once

// Text documents for instances, datasets and tours (JSON syntax).
//
// Instance document fields: "n", "m", "family", "seed", "depot" (optional,
// default 0), "coords" (array of [x, y], 17 significant digits), "cluster".
// A dataset document is a JSON array of instance documents.
// Tour document fields: "instance_seed", "family", "nodes", "cost".

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp {

std::string format_real(double value, int significant_digits = 17);

void write_instance(std::ostream& out, const GtspInstance& instance);
std::string instance_to_string(const GtspInstance& instance);
// Throws ParseError (malformed text or fields) or ValidationError (invariants).
GtspInstance read_instance(std::string_view text);

void write_dataset(std::ostream& out, const std::vector<GtspInstance>& instances);
std::vector<GtspInstance> read_dataset(std::string_view text);

struct TourDocument {
  std::uint64_t instance_seed = 0;
  Family family = Family::random;
  std::vector<int> nodes;
  double cost = 0.0;
};

void write_tour(std::ostream& out, const TourDocument& tour);
TourDocument read_tour(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Accepts a dataset (array) or a single instance document.
std::vector<GtspInstance> load_instances(const std::filesystem::path& path);

}  // namespace gtsp
