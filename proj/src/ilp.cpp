#include "gtsp/ilp.hpp"

#include <cmath>
#include <ostream>

#include "gtsp/io.hpp"

namespace gtsp {
namespace {

constexpr double kTol = 1e-9;
constexpr int kTermsPerLine = 6;

std::string coef_text(double c) { return format_real(c, 12); }

void write_terms(std::ostream& out, const std::vector<IlpTerm>& terms, const IlpModel& model) {
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (t > 0 && t % kTermsPerLine == 0) out << "\n   ";
    const double c = terms[t].coef;
    const double mag = std::fabs(c);
    out << (c < 0 ? (t == 0 ? "-" : " - ") : (t == 0 ? "" : " + "));
    if (mag != 1.0) out << coef_text(mag) << ' ';
    out << model.vars[static_cast<std::size_t>(terms[t].var)].name;
  }
}

const char* sense_text(Sense s) {
  switch (s) {
    case Sense::le: return "<=";
    case Sense::ge: return ">=";
    case Sense::eq: return "=";
  }
  return "=";
}

}  // namespace

int IlpModel::x(int i, int j) const { return i * (node_count - 1) + (j < i ? j : j - 1); }
int IlpModel::y(int i) const { return node_count * (node_count - 1) + i; }
int IlpModel::u(int i) const { return node_count * node_count + i; }

std::size_t IlpModel::count_group(const std::string& group) const {
  std::size_t c = 0;
  for (const auto& r : rows) c += r.group == group ? 1 : 0;
  return c;
}

IlpModel build_ilp(const GtspInstance& inst) {
  validate_instance(inst);
  IlpModel model;
  const int n = inst.node_count();
  const int m = inst.cluster_count;
  model.node_count = n;
  model.cluster_count = m;
  model.depot = inst.depot;
  const DistanceMatrix dist(inst.coords);
  const std::string si = "_";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) model.vars.push_back({"x_" + std::to_string(i) + si + std::to_string(j), VarKind::binary});
    }
  }
  for (int i = 0; i < n; ++i) model.vars.push_back({"y_" + std::to_string(i), VarKind::binary});
  for (int i = 0; i < n; ++i) model.vars.push_back({"u_" + std::to_string(i), VarKind::continuous});
  model.objective.assign(model.vars.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) model.objective[static_cast<std::size_t>(model.x(i, j))] = dist(i, j);
    }
  }

  const auto members = inst.clusters();
  for (int p = 0; p < m; ++p) {
    IlpRow row{"assign_" + std::to_string(p), "assign", {}, Sense::eq, 1.0};
    for (int i : members[static_cast<std::size_t>(p)]) row.terms.push_back({model.y(i), 1.0});
    model.rows.push_back(std::move(row));
  }
  for (int i = 0; i < n; ++i) {
    IlpRow row{"in_" + std::to_string(i), "inflow", {}, Sense::eq, 0.0};
    for (int j = 0; j < n; ++j) {
      if (j != i) row.terms.push_back({model.x(j, i), 1.0});
    }
    row.terms.push_back({model.y(i), -1.0});
    model.rows.push_back(std::move(row));
  }
  for (int i = 0; i < n; ++i) {
    IlpRow row{"out_" + std::to_string(i), "outflow", {}, Sense::eq, 0.0};
    for (int j = 0; j < n; ++j) {
      if (j != i) row.terms.push_back({model.x(i, j), 1.0});
    }
    row.terms.push_back({model.y(i), -1.0});
    model.rows.push_back(std::move(row));
  }
  for (int i = 0; i < n; ++i) {
    model.rows.push_back({"ulo_" + std::to_string(i), "ulower", {{model.y(i), 1.0}, {model.u(i), -1.0}}, Sense::le, 0.0});
  }
  for (int i = 0; i < n; ++i) {
    model.rows.push_back(
        {"uhi_" + std::to_string(i), "uupper", {{model.u(i), 1.0}, {model.y(i), -static_cast<double>(m)}}, Sense::le, 0.0});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || j == inst.depot) continue;
      model.rows.push_back({"mtz_" + std::to_string(i) + si + std::to_string(j), "mtz",
                            {{model.u(i), 1.0},
                             {model.u(j), -1.0},
                             {model.x(i, j), static_cast<double>(m)},
                             {model.y(j), static_cast<double>(m)}},
                            Sense::le, static_cast<double>(2 * m - 1)});
    }
  }
  model.rows.push_back({"depot", "depot", {{model.y(inst.depot), 1.0}}, Sense::eq, 1.0});
  return model;
}

void write_lp(std::ostream& out, const IlpModel& model) {
  out << "\\ GTSP with MTZ subtour elimination\n";
  out << "\\ nodes " << model.node_count << " clusters " << model.cluster_count << " depot " << model.depot << '\n';
  out << "Minimize\n obj: ";
  std::vector<IlpTerm> obj;
  for (std::size_t v = 0; v < model.objective.size(); ++v) {
    if (model.vars[v].kind == VarKind::binary && model.vars[v].name[0] == 'x') {
      obj.push_back({static_cast<int>(v), model.objective[v]});
    }
  }
  // Zero-length arcs still appear so every x variable is declared in the objective.
  for (std::size_t t = 0; t < obj.size(); ++t) {
    if (t > 0 && t % kTermsPerLine == 0) out << "\n   ";
    out << (t == 0 ? "" : " + ") << coef_text(obj[t].coef) << ' ' << model.vars[static_cast<std::size_t>(obj[t].var)].name;
  }
  out << "\nSubject To\n";
  for (const auto& row : model.rows) {
    out << ' ' << row.name << ": ";
    write_terms(out, row.terms, model);
    out << ' ' << sense_text(row.sense) << ' ' << coef_text(row.rhs) << '\n';
  }
  out << "Bounds\n";
  for (int i = 0; i < model.node_count; ++i) out << " u_" << i << " >= 0\n";
  out << "Binaries\n";
  int col = 0;
  for (const auto& v : model.vars) {
    if (v.kind != VarKind::binary) continue;
    out << (col % 10 == 0 ? (col == 0 ? " " : "\n ") : " ") << v.name;
    ++col;
  }
  out << "\nEnd\n";
}

void export_ilp(std::ostream& out, const GtspInstance& instance) { write_lp(out, build_ilp(instance)); }

bool ConstraintReport::all_ok() const { return failure_count() == 0 && structural.empty(); }

std::size_t ConstraintReport::failures(const std::string& group) const {
  std::size_t c = 0;
  for (const auto& chk : checks) c += (!chk.ok && chk.group == group) ? 1 : 0;
  return c;
}

std::size_t ConstraintReport::failure_count() const {
  std::size_t c = 0;
  for (const auto& chk : checks) c += chk.ok ? 0 : 1;
  return c;
}

ConstraintReport check_assignment(const IlpModel& model, std::span<const double> values) {
  ConstraintReport report;
  for (const auto& row : model.rows) {
    double lhs = 0.0;
    for (const auto& t : row.terms) lhs += t.coef * values[static_cast<std::size_t>(t.var)];
    bool ok = false;
    switch (row.sense) {
      case Sense::le: ok = lhs <= row.rhs + kTol; break;
      case Sense::ge: ok = lhs >= row.rhs - kTol; break;
      case Sense::eq: ok = std::fabs(lhs - row.rhs) <= kTol; break;
    }
    report.checks.push_back({row.name, row.group, ok, lhs, row.rhs});
  }
  for (std::size_t v = 0; v < model.vars.size(); ++v) {
    const double val = values[v];
    if (model.vars[v].kind == VarKind::binary) {
      report.checks.push_back({model.vars[v].name, "binary", val == 0.0 || val == 1.0, val, 1.0});
    } else {
      report.checks.push_back({model.vars[v].name, "nonnegative", val >= 0.0, val, 0.0});
    }
  }
  return report;
}

ConstraintReport check_ilp_constraints(const GtspInstance& inst, std::span<const int> nodes) {
  const IlpModel model = build_ilp(inst);
  const int n = inst.node_count();
  std::vector<double> values(model.vars.size(), 0.0);
  std::vector<std::string> structural;
  const std::size_t len = nodes.size();
  for (std::size_t p = 0; p < len; ++p) {
    const int v = nodes[p];
    if (v < 0 || v >= n) {
      structural.push_back("position " + std::to_string(p) + " holds node " + std::to_string(v) + " outside the model");
      continue;
    }
    values[static_cast<std::size_t>(model.y(v))] += 1.0;
    values[static_cast<std::size_t>(model.u(v))] = static_cast<double>(p + 1);
    const int w = nodes[(p + 1) % len];
    if (len < 2 || w < 0 || w >= n) continue;
    if (w == v) {
      structural.push_back("self-loop at node " + std::to_string(v));
      continue;
    }
    values[static_cast<std::size_t>(model.x(v, w))] += 1.0;
  }
  ConstraintReport report = check_assignment(model, values);
  report.structural = std::move(structural);
  return report;
}

}  // namespace gtsp
