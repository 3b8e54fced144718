#pragma once

// Integer model of the GTSP with Miller-Tucker-Zemlin subtour elimination.
//
// Variables: x_i_j (binary, i != j), y_i (binary), u_i (continuous >= 0).
// Row groups:
//   assign   one per cluster      sum_{i in V_p} y_i = 1
//   inflow   one per node         sum_j x_j_i - y_i = 0
//   outflow  one per node         sum_j x_i_j - y_i = 0
//   ulower   one per node         y_i - u_i <= 0
//   uupper   one per node         u_i - m y_i <= 0
//   mtz      one per arc i->j, j != depot    u_i - u_j + m x_i_j + m y_j <= 2m - 1
//            (inactive when j is unvisited, where u_j = 0)
//   depot    one                  y_depot = 1
// Sequence positions are anchored at the depot (u_depot = 1), so arcs that
// close the cycle back into the depot carry no ordering row.

#include <iosfwd>
#include <string>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp {

enum class Sense { le, eq, ge };

struct IlpTerm {
  int var;
  double coef;
};

struct IlpRow {
  std::string name;
  std::string group;
  std::vector<IlpTerm> terms;
  Sense sense = Sense::eq;
  double rhs = 0.0;
};

enum class VarKind { binary, continuous };

struct IlpVar {
  std::string name;
  VarKind kind;
};

struct IlpModel {
  int node_count = 0;
  int cluster_count = 0;
  int depot = 0;
  std::vector<IlpVar> vars;
  std::vector<double> objective;  // coefficient per variable
  std::vector<IlpRow> rows;

  [[nodiscard]] int x(int i, int j) const;  // variable index of x_i_j, i != j
  [[nodiscard]] int y(int i) const;
  [[nodiscard]] int u(int i) const;
  [[nodiscard]] std::size_t count_group(const std::string& group) const;
};

IlpModel build_ilp(const GtspInstance& instance);

// LP text: Minimize / Subject To / Bounds / Binaries / End. Coefficients use 12
// significant digits.
void write_lp(std::ostream& out, const IlpModel& model);
void export_ilp(std::ostream& out, const GtspInstance& instance);

struct ConstraintCheck {
  std::string name;
  std::string group;
  bool ok = true;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct ConstraintReport {
  std::vector<ConstraintCheck> checks;  // every row, then the variable-domain checks
  std::vector<std::string> structural;  // tour entries that cannot be mapped to variables
  [[nodiscard]] bool all_ok() const;
  [[nodiscard]] std::size_t failures(const std::string& group) const;
  [[nodiscard]] std::size_t failure_count() const;
};

// Evaluates every model row on the assignment induced by `nodes` (arcs along
// the cyclic sequence, y on visited nodes, u = 1-based position, 0 elsewhere).
ConstraintReport check_ilp_constraints(const GtspInstance& instance, std::span<const int> nodes);
ConstraintReport check_assignment(const IlpModel& model, std::span<const double> values);

}  // namespace gtsp
