#include "gtsp/baselines.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "gtsp/errors.hpp"
#include "gtsp/rng.hpp"

namespace gtsp {
namespace {

constexpr double kImprovement = 1e-12;

std::vector<int> non_depot_clusters(const GtspInstance& inst) {
  const int dc = inst.cluster_of[static_cast<std::size_t>(inst.depot)];
  std::vector<int> out;
  for (int c = 0; c < inst.cluster_count; ++c) {
    if (c != dc) out.push_back(c);
  }
  return out;
}

// Canonical direction of a tour that starts at the depot: the smaller of the
// sequence and its reversal (both starting at the depot).
std::vector<int> canonical(const std::vector<int>& seq) {
  std::vector<int> rev(seq.size());
  rev[0] = seq[0];
  std::reverse_copy(seq.begin() + 1, seq.end(), rev.begin() + 1);
  return std::min(seq, rev);
}

struct ExactSearch {
  const GtspInstance& inst;
  const DistanceMatrix& dist;
  const std::vector<std::vector<int>>& members;
  std::vector<int> order;
  std::vector<int> seq;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> best_seq;

  void descend(std::size_t depth, double partial) {
    if (partial > best_cost) return;
    if (depth == order.size()) {
      const double cost = partial + dist(seq.back(), seq.front());
      if (cost > best_cost) return;
      auto cand = canonical(seq);
      if (cost < best_cost || cand < best_seq) {
        best_cost = cost;
        best_seq = std::move(cand);
      }
      return;
    }
    for (int v : members[static_cast<std::size_t>(order[depth])]) {
      const double step = dist(seq.back(), v);
      seq.push_back(v);
      descend(depth + 1, partial + step);
      seq.pop_back();
    }
  }
};

Tour finish(const GtspInstance& inst, std::vector<int> nodes) { return make_tour(inst, std::move(nodes)); }

Tour nearest_neighbor_from(const GtspInstance& inst, const DistanceMatrix& dist, std::vector<int> prefix) {
  std::vector<std::uint8_t> done(static_cast<std::size_t>(inst.cluster_count), 0);
  for (int v : prefix) done[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(v)])] = 1;
  while (static_cast<int>(prefix.size()) < inst.cluster_count) {
    const int cur = prefix.back();
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < inst.node_count(); ++v) {
      if (done[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(v)])]) continue;
      if (dist(cur, v) < best_d) {
        best_d = dist(cur, v);
        best = v;
      }
    }
    prefix.push_back(best);
    done[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(best)])] = 1;
  }
  return finish(inst, std::move(prefix));
}

}  // namespace

std::uint64_t exact_enumeration_count(const GtspInstance& inst) {
  const auto members = inst.clusters();
  std::uint64_t selections = 1;
  constexpr auto kCap = std::numeric_limits<std::uint64_t>::max() / 64;
  for (int c : non_depot_clusters(inst)) {
    selections *= members[static_cast<std::size_t>(c)].size();
    if (selections > kCap) return std::numeric_limits<std::uint64_t>::max();
  }
  const int free_clusters = inst.cluster_count - 1;
  std::uint64_t orders = 1;
  for (int i = 2; i <= free_clusters; ++i) {
    orders *= static_cast<std::uint64_t>(i);
    if (orders > kCap) return std::numeric_limits<std::uint64_t>::max();
  }
  if (free_clusters >= 2) orders /= 2;  // reversal symmetry
  if (selections > std::numeric_limits<std::uint64_t>::max() / orders) return std::numeric_limits<std::uint64_t>::max();
  return selections * orders;
}

Tour exact_solve(const GtspInstance& inst, const SearchBudget& budget) {
  validate_instance(inst);
  const std::uint64_t count = exact_enumeration_count(inst);
  if (count > budget.max_enumerated) {
    throw BudgetError("exact_solve: " + std::to_string(count) + " tours to enumerate exceeds the budget of " +
                      std::to_string(budget.max_enumerated));
  }
  const DistanceMatrix dist(inst.coords);
  const auto members = inst.clusters();
  ExactSearch search{inst, dist, members, non_depot_clusters(inst), {inst.depot},
                     std::numeric_limits<double>::infinity(), {}};
  do {
    // Reversal of an order yields the same cycles; keep orders whose first
    // cluster id is below the last one.
    if (search.order.size() >= 2 && search.order.front() > search.order.back()) continue;
    search.descend(0, 0.0);
  } while (std::next_permutation(search.order.begin(), search.order.end()));
  return finish(inst, search.best_seq);
}

Tour nearest_neighbor_solve(const GtspInstance& inst) {
  validate_instance(inst);
  const DistanceMatrix dist(inst.coords);
  return nearest_neighbor_from(inst, dist, {inst.depot});
}

Tour random_tour(const GtspInstance& inst, std::uint64_t seed) {
  validate_instance(inst);
  Rng rng(derive_seed(seed, {0x72616E64ULL, inst.seed}));
  const auto members = inst.clusters();
  auto order = non_depot_clusters(inst);
  rng.shuffle(order.begin(), order.end());
  std::vector<int> nodes{inst.depot};
  for (int c : order) {
    const auto& mem = members[static_cast<std::size_t>(c)];
    nodes.push_back(mem[rng.below(mem.size())]);
  }
  return finish(inst, std::move(nodes));
}

Tour local_descent(const GtspInstance& inst, Tour tour, std::vector<double>* trace) {
  const DistanceMatrix dist(inst.coords);
  const auto members = inst.clusters();
  auto& p = tour.nodes;
  const int m = static_cast<int>(p.size());
  double cost = cycle_length(dist, p);
  if (trace != nullptr) trace->push_back(cost);
  auto at = [&](int i) { return p[static_cast<std::size_t>((i % m + m) % m)]; };

  bool improved = true;
  while (improved) {
    improved = false;
    // 2-opt over positions 1..m-1 (the depot stays first).
    for (int i = 1; i < m - 1 && !improved; ++i) {
      for (int j = i + 1; j < m && !improved; ++j) {
        const double delta = dist(at(i - 1), at(j)) + dist(at(i), at(j + 1)) - dist(at(i - 1), at(i)) -
                             dist(at(j), at(j + 1));
        if (delta < -kImprovement) {
          std::reverse(p.begin() + i, p.begin() + j + 1);
          cost = cycle_length(dist, p);
          if (trace != nullptr) trace->push_back(cost);
          improved = true;
        }
      }
    }
    if (improved) continue;
    // Best node of each non-depot cluster given its neighbours.
    for (int i = 1; i < m; ++i) {
      const int prev = at(i - 1);
      const int next = at(i + 1);
      const int cur = at(i);
      const auto c = static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(cur)]);
      double best = dist(prev, cur) + dist(cur, next);
      int best_v = cur;
      for (int v : members[c]) {
        const double val = dist(prev, v) + dist(v, next);
        if (val < best - kImprovement) {
          best = val;
          best_v = v;
        }
      }
      if (best_v != cur) {
        p[static_cast<std::size_t>(i)] = best_v;
        cost = cycle_length(dist, p);
        if (trace != nullptr) trace->push_back(cost);
        improved = true;
      }
    }
  }
  tour.cost = cycle_length(inst, p);
  return tour;
}

Tour local_search(const GtspInstance& inst, const Tour& initial, const SearchBudget& budget) {
  const auto report = validate_tour(inst, initial.nodes);
  if (!report.ok()) throw FeasibilityError("local_search: initial tour infeasible: " + report.summary());
  Tour best = local_descent(inst, initial);
  const Tour start_copy = make_tour(inst, initial.nodes);
  if (start_copy.cost < best.cost) best = start_copy;

  const DistanceMatrix dist(inst.coords);
  Rng rng(derive_seed(budget.seed, {0x6C6F63616CULL, inst.seed}));
  const int depot_cluster = inst.cluster_of[static_cast<std::size_t>(inst.depot)];
  std::vector<int> firsts;
  for (int v = 0; v < inst.node_count(); ++v) {
    if (inst.cluster_of[static_cast<std::size_t>(v)] != depot_cluster) firsts.push_back(v);
  }
  for (int r = 1; r < budget.restarts && !firsts.empty(); ++r) {
    const int first = firsts[rng.below(firsts.size())];
    Tour cand = local_descent(inst, nearest_neighbor_from(inst, dist, {inst.depot, first}));
    if (cand.cost < best.cost) best = std::move(cand);
  }
  return best;
}

}  // namespace gtsp
