#include "gtsp/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "gtsp/errors.hpp"
#include "gtsp/io.hpp"

namespace gtsp {
namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

double MethodResult::mean_obj() const {
  if (costs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
}

double optimality_gap(double obj, double best) {
  if (obj == best) return 0.0;
  if (!(best > 0.0)) throw ValidationError("optimality_gap: best objective must be positive, got " + format_real(best));
  return (obj - best) / best * 100.0;
}

double EvalReport::best() const {
  double b = std::numeric_limits<double>::infinity();
  for (const auto& m : methods) b = std::min(b, m.mean_obj());
  return b;
}

double EvalReport::gap(std::size_t method) const { return optimality_gap(methods.at(method).mean_obj(), best()); }

void write_summary_csv(std::ostream& out, const EvalReport& report) {
  out << "dataset,method,instances,obj,gap\n";
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    const auto& m = report.methods[i];
    out << report.dataset << ',' << m.method << ',' << m.costs.size() << ',' << format_real(m.mean_obj()) << ','
        << format_real(report.gap(i)) << '\n';
  }
}

void write_detail_csv(std::ostream& out, const EvalReport& report) {
  out << "dataset,method,instance,seed,cost\n";
  for (const auto& m : report.methods) {
    for (std::size_t i = 0; i < m.costs.size(); ++i) {
      out << report.dataset << ',' << m.method << ',' << i << ',' << (i < m.seeds.size() ? m.seeds[i] : 0) << ','
          << format_real(m.costs[i]) << '\n';
    }
  }
}

void write_timing_csv(std::ostream& out, const EvalReport& report) {
  out << "dataset,method,end_to_end_seconds,inference_seconds\n";
  for (const auto& m : report.methods) {
    out << report.dataset << ',' << m.method << ',' << format_real(m.end_to_end_seconds, 6) << ','
        << format_real(m.inference_seconds, 6) << '\n';
  }
}

std::string format_table(const EvalReport& report) {
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"Method", "Obj.", "Gap", "Time(s)", "Infer(s)"});
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    const auto& m = report.methods[i];
    rows.push_back({m.method, fixed(m.mean_obj(), 2), fixed(report.gap(i), 2) + "%", fixed(m.end_to_end_seconds, 2),
                    fixed(m.inference_seconds, 2)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out = "dataset: " + report.dataset + "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      out += c == 0 ? r[c] + pad : "  " + pad + r[c];
    }
    out += '\n';
  }
  return out;
}

}  // namespace gtsp
