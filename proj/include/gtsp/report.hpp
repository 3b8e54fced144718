#pragma once

// Per-method evaluation results and the Obj / Gap / Time table.
//
// CSV schemas (header row first, full precision, RFC 4180 without quoting
// since no field contains a comma):
//   summary  dataset,method,instances,obj,gap
//   detail   dataset,method,instance,seed,cost
//   timing   dataset,method,end_to_end_seconds,inference_seconds
// Timing lives in its own table so the other two are byte-stable.

#include <iosfwd>
#include <string>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp {

struct MethodResult {
  std::string method;
  std::vector<std::uint64_t> seeds;  // instance seed per record
  std::vector<double> costs;
  std::vector<Tour> tours;
  double end_to_end_seconds = 0.0;  // includes loading (checkpoints, images)
  double inference_seconds = 0.0;   // solving only
  [[nodiscard]] double mean_obj() const;
};

// (obj - best) / best * 100. best must be positive unless obj == best (gap 0).
double optimality_gap(double obj, double best);

struct EvalReport {
  std::string dataset;
  std::vector<MethodResult> methods;
  // Minimum mean Obj across methods.
  [[nodiscard]] double best() const;
  [[nodiscard]] double gap(std::size_t method) const;
};

void write_summary_csv(std::ostream& out, const EvalReport& report);
void write_detail_csv(std::ostream& out, const EvalReport& report);
void write_timing_csv(std::ostream& out, const EvalReport& report);
// Aligned text table: Method, Obj. and Gap to two decimals, Time in seconds.
std::string format_table(const EvalReport& report);

}  // namespace gtsp
