#include "gtsp/render.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>
#include <vector>

#include "gtsp/errors.hpp"

namespace gtsp {
namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double to_x(double x) { return kSvgMargin + x * (kSvgSize - 2 * kSvgMargin); }
double to_y(double y) { return kSvgMargin + (1.0 - y) * (kSvgSize - 2 * kSvgMargin); }

}  // namespace

void render_route(std::ostream& out, const GtspInstance& inst, std::span<const int> tour) {
  const TourReport report = validate_tour(inst, tour);
  if (!report.ok()) throw FeasibilityError("render_route: infeasible tour: " + report.summary());

  std::vector<std::uint8_t> selected(static_cast<std::size_t>(inst.node_count()), 0);
  for (int v : tour) selected[static_cast<std::size_t>(v)] = 1;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSvgSize << "\" height=\"" << kSvgSize
      << "\" viewBox=\"0 0 " << kSvgSize << ' ' << kSvgSize << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kSvgSize << "\" height=\"" << kSvgSize << "\" fill=\"#ffffff\"/>\n";

  out << "<polyline class=\"tour\" fill=\"none\" stroke=\"#222222\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i <= tour.size(); ++i) {
    const Point& p = inst.coords[static_cast<std::size_t>(tour[i % tour.size()])];
    out << (i == 0 ? "" : " ") << px(to_x(p.x)) << ',' << px(to_y(p.y));
  }
  out << "\"/>\n";

  for (int v = 0; v < inst.node_count(); ++v) {
    const Point& p = inst.coords[static_cast<std::size_t>(v)];
    const int c = inst.cluster_of[static_cast<std::size_t>(v)];
    const std::string_view color = kClusterPalette[static_cast<std::size_t>(c) % kClusterPalette.size()];
    out << "<circle class=\"node" << (selected[static_cast<std::size_t>(v)] ? " selected" : "") << "\" cx=\""
        << px(to_x(p.x)) << "\" cy=\"" << px(to_y(p.y)) << "\" r=\"" << (selected[static_cast<std::size_t>(v)] ? 7 : 4)
        << "\" fill=\"" << color << '"';
    if (selected[static_cast<std::size_t>(v)]) out << " stroke=\"#000000\" stroke-width=\"2\"";
    out << "/>\n";
  }

  const Point& d = inst.coords[static_cast<std::size_t>(inst.depot)];
  out << "<rect class=\"depot\" x=\"" << px(to_x(d.x) - 9) << "\" y=\"" << px(to_y(d.y) - 9)
      << "\" width=\"18\" height=\"18\" fill=\"none\" stroke=\"#000000\" stroke-width=\"3\"/>\n";
  out << "</svg>\n";
}

std::string render_route(const GtspInstance& inst, std::span<const int> tour) {
  std::ostringstream out;
  render_route(out, inst, tour);
  return out.str();
}

}  // namespace gtsp
