#pragma once

// SVG route drawing. Canvas 800x800 with a 20 px margin; the unit square maps
// linearly onto it with y pointing up. Cluster colours cycle through a fixed
// 12-entry palette.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "gtsp/instance.hpp"

namespace gtsp {

inline constexpr int kSvgSize = 800;
inline constexpr int kSvgMargin = 20;
inline constexpr std::array<std::string_view, 12> kClusterPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

// Throws FeasibilityError carrying the validate_tour summary when the tour is infeasible.
void render_route(std::ostream& out, const GtspInstance& instance, std::span<const int> tour);
std::string render_route(const GtspInstance& instance, std::span<const int> tour);

}  // namespace gtsp
