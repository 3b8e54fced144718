#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gtsp/errors.hpp"
#include "gtsp/image.hpp"
#include "support.hpp"

using namespace gtsp;
using gtsp::testing::make_instance;

TEST_CASE("ars_dims hand-evaluated values") {
  // ceil(2 * sqrt(n) / 16) * 16
  CHECK(ars_dims(20, 16, 2.0) == std::pair{16, 16});    // 8.94 -> 1 patch
  CHECK(ars_dims(50, 16, 2.0) == std::pair{16, 16});    // 14.14
  CHECK(ars_dims(100, 16, 2.0) == std::pair{32, 32});   // 20
  CHECK(ars_dims(150, 16, 2.0) == std::pair{32, 32});   // 24.49
  CHECK(ars_dims(200, 16, 2.0) == std::pair{32, 32});   // 28.28
  CHECK(ars_dims(257, 16, 2.0) == std::pair{48, 48});   // 32.06
}

TEST_CASE("ars_dims is monotone and patch-aligned") {
  for (int w : {1, 4, 8, 16, 32}) {
    for (double alpha : {0.5, 1.0, 2.0, 3.7}) {
      int prev = 0;
      for (int n = 1; n <= 400; ++n) {
        const auto [W, H] = ars_dims(n, w, alpha);
        CHECK(W == H);
        CHECK(W % w == 0);
        CHECK(W >= w);
        CHECK(W >= prev);
        CHECK(W >= alpha * std::sqrt(static_cast<double>(n)) - 1e-9);
        prev = W;
      }
    }
  }
  CHECK_THROWS_AS(ars_dims(0, 16, 2.0), ValidationError);
  CHECK_THROWS_AS(ars_dims(10, 0, 2.0), ValidationError);
  CHECK_THROWS_AS(ars_dims(10, 16, 0.0), ValidationError);
  CHECK_THROWS_AS(ars_dims(10, 16, -1.0), ValidationError);
}

TEST_CASE("pixel placement, clamping and background") {
  const auto inst = make_instance({{0.5, 0.5}, {1.0, 1.0}, {0.0, 0.0}}, {2, 1, 0});
  const auto img = build_image(inst, 32, 32, 16);
  CHECK(img.at(16, 16) == 3);
  CHECK(img.at(31, 31) == 2);
  CHECK(img.at(0, 0) == 1);
  CHECK(img.at(5, 7) == 0);
  CHECK(img.nonzero_count() == 3);
}

TEST_CASE("collisions keep the larger node index") {
  const auto inst = make_instance({{0.5, 0.5}, {0.501, 0.501}, {0.1, 0.1}}, {0, 1, 2});
  const auto img = build_image(inst, 16, 16, 16);
  CHECK(img.at(8, 8) == 2);
  CHECK(img.nonzero_count() == 2);
}

TEST_CASE("density bound and purity on generated instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = generate_instance({150, 30, Family::density, seed, {}});
    const auto img = build_image(inst, 16, 2.0);
    CHECK(img.width == 32);
    CHECK(img.nonzero_count() <= std::min(inst.node_count(), img.width * img.height));
    for (auto v : img.pixels) {
      CHECK(v >= 0);
      CHECK(v <= inst.cluster_count);
    }
    const auto again = build_image(inst, 16, 2.0);
    CHECK(again.pixels == img.pixels);
  }
}

TEST_CASE("patch extraction geometry") {
  const auto inst = generate_instance({100, 10, Family::random, 4, {}});
  const auto img = build_image(inst, 32, 32, 16);
  const auto grid = extract_patches(img);
  REQUIRE(grid.count() == 4);
  CHECK(grid.values.size() == img.pixels.size());
  const std::vector<std::pair<double, double>> expect{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}};
  CHECK(grid.coords == expect);
  // patch 1 is the top-right block: its first value is pixel (16, 0)
  CHECK(grid.patch(1)[0] == img.at(16, 0));
  CHECK(grid.patch(2)[16 * 3 + 5] == img.at(5, 16 + 3));

  auto a = grid.values;
  auto b = img.pixels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  const auto back = assemble_patches(grid, img.cluster_count);
  CHECK(back.pixels == img.pixels);

  const auto single = extract_patches(build_image(inst, 16, 16, 16));
  CHECK(single.count() == 1);
  CHECK(single.coords[0] == std::pair{0.0, 0.0});
}

TEST_CASE("pgm header") {
  const auto inst = make_instance({{0.5, 0.5}, {0.1, 0.1}}, {0, 1});
  const auto img = build_image(inst, 16, 16, 16);
  std::ostringstream out;
  write_pgm(out, img);
  CHECK(out.str().rfind("P2\n16 16\n2\n", 0) == 0);
}
