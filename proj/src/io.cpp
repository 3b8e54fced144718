#include "gtsp/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gtsp/errors.hpp"

namespace gtsp {
namespace {

using json = nlohmann::json;

std::string line_context(std::string_view text, std::size_t byte) {
  const std::size_t upto = std::min(byte, text.size());
  const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
  const auto last_nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
  const std::size_t col = last_nl == std::string_view::npos ? upto : upto - last_nl - 1;
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed document at " + line_context(text, e.byte) + ": " + e.what());
  }
}

[[noreturn]] void field_error(std::string_view where, std::string_view field, std::string_view what) {
  throw ParseError(std::string(where) + ": field '" + std::string(field) + "' " + std::string(what));
}

const json& require(const json& doc, std::string_view where, const char* field) {
  const auto it = doc.find(field);
  if (it == doc.end()) field_error(where, field, "is missing");
  return *it;
}

long long as_integer(const json& v, std::string_view where, std::string_view field) {
  if (!v.is_number_integer()) field_error(where, field, "must be an integer");
  return v.get<long long>();
}

std::uint64_t as_u64(const json& v, std::string_view where, std::string_view field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  field_error(where, field, "must be a non-negative integer");
}

double as_real(const json& v, std::string_view where, std::string_view field) {
  if (!v.is_number()) field_error(where, field, "must be a number");
  return v.get<double>();
}

GtspInstance instance_from_json(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ParseError(where + ": expected an object");
  GtspInstance inst;
  const auto n = as_integer(require(doc, where, "n"), where, "n");
  inst.cluster_count = static_cast<int>(as_integer(require(doc, where, "m"), where, "m"));
  const auto& fam = require(doc, where, "family");
  if (!fam.is_string()) field_error(where, "family", "must be a string");
  try {
    inst.family = parse_family(fam.get<std::string>());
  } catch (const ValidationError& e) {
    field_error(where, "family", e.what());
  }
  inst.seed = as_u64(require(doc, where, "seed"), where, "seed");
  if (const auto it = doc.find("depot"); it != doc.end()) {
    inst.depot = static_cast<int>(as_integer(*it, where, "depot"));
  }
  const auto& coords = require(doc, where, "coords");
  if (!coords.is_array()) field_error(where, "coords", "must be an array");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& p = coords[i];
    const std::string field = "coords[" + std::to_string(i) + "]";
    if (!p.is_array() || p.size() != 2) field_error(where, field, "must be a pair [x, y]");
    inst.coords.push_back({as_real(p[0], where, field), as_real(p[1], where, field)});
  }
  const auto& cluster = require(doc, where, "cluster");
  if (!cluster.is_array()) field_error(where, "cluster", "must be an array");
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    inst.cluster_of.push_back(static_cast<int>(as_integer(cluster[i], where, "cluster[" + std::to_string(i) + "]")));
  }
  if (n != static_cast<long long>(inst.coords.size())) {
    throw ValidationError(where + ": n=" + std::to_string(n) + " but coords has " +
                          std::to_string(inst.coords.size()) + " entries");
  }
  validate_instance(inst);
  return inst;
}

}  // namespace

std::string format_real(double value, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

void write_instance(std::ostream& out, const GtspInstance& inst) {
  out << "{\n";
  out << "  \"n\": " << inst.node_count() << ",\n";
  out << "  \"m\": " << inst.cluster_count << ",\n";
  out << "  \"family\": \"" << to_string(inst.family) << "\",\n";
  out << "  \"seed\": " << inst.seed << ",\n";
  out << "  \"depot\": " << inst.depot << ",\n";
  out << "  \"coords\": [";
  for (std::size_t i = 0; i < inst.coords.size(); ++i) {
    out << (i == 0 ? "\n    " : ",\n    ") << '[' << format_real(inst.coords[i].x) << ", "
        << format_real(inst.coords[i].y) << ']';
  }
  out << "\n  ],\n";
  out << "  \"cluster\": [";
  for (std::size_t i = 0; i < inst.cluster_of.size(); ++i) out << (i == 0 ? "" : ", ") << inst.cluster_of[i];
  out << "]\n}";
}

std::string instance_to_string(const GtspInstance& instance) {
  std::ostringstream out;
  write_instance(out, instance);
  out << '\n';
  return out.str();
}

GtspInstance read_instance(std::string_view text) { return instance_from_json(parse_json(text), "instance"); }

void write_dataset(std::ostream& out, const std::vector<GtspInstance>& instances) {
  out << '[';
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out << (i == 0 ? "\n" : ",\n");
    write_instance(out, instances[i]);
  }
  out << "\n]\n";
}

std::vector<GtspInstance> read_dataset(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_array()) throw ParseError("dataset: expected an array of instance documents");
  std::vector<GtspInstance> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    out.push_back(instance_from_json(doc[i], "dataset[" + std::to_string(i) + "]"));
  }
  return out;
}

void write_tour(std::ostream& out, const TourDocument& tour) {
  out << "{\"instance_seed\": " << tour.instance_seed << ", \"family\": \"" << to_string(tour.family)
      << "\", \"nodes\": [";
  for (std::size_t i = 0; i < tour.nodes.size(); ++i) out << (i == 0 ? "" : ", ") << tour.nodes[i];
  out << "], \"cost\": " << format_real(tour.cost) << "}\n";
}

TourDocument read_tour(std::string_view text) {
  const json doc = parse_json(text);
  const std::string where = "tour";
  if (!doc.is_object()) throw ParseError("tour: expected an object");
  TourDocument tour;
  tour.instance_seed = as_u64(require(doc, where, "instance_seed"), where, "instance_seed");
  const auto& fam = require(doc, where, "family");
  if (!fam.is_string()) field_error(where, "family", "must be a string");
  tour.family = parse_family(fam.get<std::string>());
  const auto& nodes = require(doc, where, "nodes");
  if (!nodes.is_array()) field_error(where, "nodes", "must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    tour.nodes.push_back(static_cast<int>(as_integer(nodes[i], where, "nodes[" + std::to_string(i) + "]")));
  }
  tour.cost = as_real(require(doc, where, "cost"), where, "cost");
  return tour;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::vector<GtspInstance> load_instances(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') return read_dataset(text);
  return {read_instance(text)};
}

}  // namespace gtsp
