#include "gtsp/image.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gtsp/errors.hpp"

namespace gtsp {

int ars_side(int node_count, int patch_size, double alpha) {
  if (node_count < 1) throw ValidationError("ars: node count must be >= 1");
  if (patch_size < 1) throw ValidationError("ars: patch size must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("ars: alpha must be > 0");
  const double patches = std::ceil(alpha * std::sqrt(static_cast<double>(node_count)) / patch_size);
  return std::max(1, static_cast<int>(patches)) * patch_size;
}

std::pair<int, int> ars_dims(int node_count, int patch_size, double alpha) {
  const int side = ars_side(node_count, patch_size, alpha);
  return {side, side};
}

int InstanceImage::nonzero_count() const {
  return static_cast<int>(std::ranges::count_if(pixels, [](std::int32_t v) { return v != 0; }));
}

InstanceImage build_image(const GtspInstance& inst, int width, int height, int patch_size) {
  if (width < 1 || height < 1 || patch_size < 1 || width % patch_size != 0 || height % patch_size != 0) {
    throw ValidationError("image: dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                          " must be positive multiples of the patch size " + std::to_string(patch_size));
  }
  InstanceImage img;
  img.width = width;
  img.height = height;
  img.patch_size = patch_size;
  img.cluster_count = inst.cluster_count;
  img.pixels.assign(static_cast<std::size_t>(width) * height, 0);
  for (int i = 0; i < inst.node_count(); ++i) {
    const Point& p = inst.coords[static_cast<std::size_t>(i)];
    const int x = std::clamp(static_cast<int>(std::floor(p.x * width)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.y * height)), 0, height - 1);
    img.pixels[static_cast<std::size_t>(y) * width + x] = inst.cluster_of[static_cast<std::size_t>(i)] + 1;
  }
  return img;
}

InstanceImage build_image(const GtspInstance& inst, int patch_size, double alpha) {
  const auto [w, h] = ars_dims(inst.node_count(), patch_size, alpha);
  return build_image(inst, w, h, patch_size);
}

PatchGrid extract_patches(const InstanceImage& img) {
  const int w = img.patch_size;
  PatchGrid grid;
  grid.patch_size = w;
  grid.patches_x = img.width / w;
  grid.patches_y = img.height / w;
  grid.values.reserve(img.pixels.size());
  for (int py = 0; py < grid.patches_y; ++py) {
    for (int px = 0; px < grid.patches_x; ++px) {
      for (int dy = 0; dy < w; ++dy) {
        for (int dx = 0; dx < w; ++dx) grid.values.push_back(img.at(px * w + dx, py * w + dy));
      }
      grid.coords.emplace_back(static_cast<double>(px * w) / img.width, static_cast<double>(py * w) / img.height);
    }
  }
  return grid;
}

InstanceImage assemble_patches(const PatchGrid& grid, int cluster_count) {
  const int w = grid.patch_size;
  InstanceImage img;
  img.width = grid.patches_x * w;
  img.height = grid.patches_y * w;
  img.patch_size = w;
  img.cluster_count = cluster_count;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  for (int p = 0; p < grid.count(); ++p) {
    const int px = p % grid.patches_x;
    const int py = p / grid.patches_x;
    const auto vals = grid.patch(p);
    for (int dy = 0; dy < w; ++dy) {
      for (int dx = 0; dx < w; ++dx) {
        img.pixels[static_cast<std::size_t>(py * w + dy) * img.width + (px * w + dx)] =
            vals[static_cast<std::size_t>(dy) * w + dx];
      }
    }
  }
  return img;
}

void write_pgm(std::ostream& out, const InstanceImage& img) {
  out << "P2\n" << img.width << ' ' << img.height << '\n' << std::max(img.cluster_count, 1) << '\n';
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out << (x == 0 ? "" : " ") << img.at(x, y);
    out << '\n';
  }
}

}  // namespace gtsp
