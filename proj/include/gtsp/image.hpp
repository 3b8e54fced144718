#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp {

// Square side length from the adaptive resolution rule:
// ceil(alpha * sqrt(n) / w) * w. Throws ValidationError on non-positive input.
int ars_side(int node_count, int patch_size, double alpha);
std::pair<int, int> ars_dims(int node_count, int patch_size, double alpha);

// Single-channel cluster-index raster. Pixel (x, y) is stored at y * width + x;
// 0 is background, c + 1 marks a node of cluster c.
struct InstanceImage {
  int width = 0;
  int height = 0;
  int patch_size = 0;
  int cluster_count = 0;
  std::vector<std::int32_t> pixels;

  [[nodiscard]] std::int32_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] int nonzero_count() const;
};

// Nodes are rasterised in index order, so on a collision the larger index wins.
// Coordinate 1.0 clamps to the last row/column.
InstanceImage build_image(const GtspInstance& instance, int width, int height, int patch_size);
InstanceImage build_image(const GtspInstance& instance, int patch_size, double alpha);

struct PatchGrid {
  int patch_size = 0;
  int patches_x = 0;
  int patches_y = 0;
  // patch p occupies values[p * w * w, (p + 1) * w * w), row-major inside the patch;
  // patches themselves are ordered row-major over the grid.
  std::vector<std::int32_t> values;
  // (top-left pixel x / W, top-left pixel y / H) per patch.
  std::vector<std::pair<double, double>> coords;

  [[nodiscard]] int count() const { return patches_x * patches_y; }
  [[nodiscard]] std::span<const std::int32_t> patch(int p) const {
    const std::size_t len = static_cast<std::size_t>(patch_size) * patch_size;
    return {values.data() + static_cast<std::size_t>(p) * len, len};
  }
};

PatchGrid extract_patches(const InstanceImage& image);
// Inverse of extract_patches.
InstanceImage assemble_patches(const PatchGrid& grid, int cluster_count);

// Plain-text PGM: "P2\n<W> <H>\n<maxval>\n" then one image row per line,
// maxval = max(cluster_count, 1).
void write_pgm(std::ostream& out, const InstanceImage& image);

}  // namespace gtsp
