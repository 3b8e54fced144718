#pragma once

// Helpers shared by the test binaries. The oracles here are written without
// the library's solvers or distance code so they can cross-check them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp::testing {

inline GtspInstance make_instance(std::vector<Point> coords, std::vector<int> cluster_of, int depot = 0) {
  GtspInstance inst;
  inst.coords = std::move(coords);
  inst.cluster_of = std::move(cluster_of);
  inst.cluster_count = *std::max_element(inst.cluster_of.begin(), inst.cluster_of.end()) + 1;
  inst.depot = depot;
  return inst;
}

inline GtspInstance unit_corners() {
  return make_instance({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {0, 1, 2, 3});
}

inline double euclid(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double oracle_cycle(const GtspInstance& inst, const std::vector<int>& seq) {
  double total = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    total += euclid(inst.coords[static_cast<std::size_t>(seq[i])],
                    inst.coords[static_cast<std::size_t>(seq[(i + 1) % seq.size()])]);
  }
  return total;
}

// Every choice of one node per non-depot cluster, every visiting order.
inline double brute_force_optimum(const GtspInstance& inst) {
  const int dc = inst.cluster_of[static_cast<std::size_t>(inst.depot)];
  std::vector<std::vector<int>> groups;
  for (int c = 0; c < inst.cluster_count; ++c) {
    if (c == dc) continue;
    std::vector<int> g;
    for (int v = 0; v < inst.node_count(); ++v) {
      if (inst.cluster_of[static_cast<std::size_t>(v)] == c) g.push_back(v);
    }
    groups.push_back(g);
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(groups.size());
  std::function<void(std::size_t)> choose = [&](std::size_t g) {
    if (g == groups.size()) {
      std::vector<int> perm = pick;
      std::sort(perm.begin(), perm.end());
      do {
        std::vector<int> seq{inst.depot};
        seq.insert(seq.end(), perm.begin(), perm.end());
        best = std::min(best, oracle_cycle(inst, seq));
      } while (std::next_permutation(perm.begin(), perm.end()));
      return;
    }
    for (int v : groups[g]) {
      pick[g] = v;
      choose(g + 1);
    }
  };
  choose(0);
  return best;
}

}  // namespace gtsp::testing
