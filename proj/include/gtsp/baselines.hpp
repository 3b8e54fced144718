#pragma once

#include <cstdint>
#include <vector>

#include "gtsp/instance.hpp"

namespace gtsp {

struct SearchBudget {
  std::uint64_t max_enumerated = 10'000'000;
  int restarts = 20;
  std::uint64_t seed = 0;
};

// Number of complete tours exact_solve enumerates: the product of the
// non-depot cluster sizes times the number of canonical cluster orders.
std::uint64_t exact_enumeration_count(const GtspInstance& instance);

// Optimal tour by enumeration over canonical cluster orders (depot's cluster
// first, reversal symmetry removed) and all node selections. Among equal-cost
// optima the lexicographically smallest node sequence is returned. Throws
// BudgetError when the enumeration count exceeds the budget.
Tour exact_solve(const GtspInstance& instance, const SearchBudget& budget = {});

// Depot first, then repeatedly the nearest node of an unvisited cluster (ties: lowest index).
Tour nearest_neighbor_solve(const GtspInstance& instance);

// Uniform cluster order after the depot's cluster and a uniform node per cluster.
Tour random_tour(const GtspInstance& instance, std::uint64_t seed);

// One descent to a local optimum of 2-opt over the cluster order and
// best-node replacement inside each cluster. `trace`, when given, receives the
// cost after every accepted move (starting with the initial cost).
Tour local_descent(const GtspInstance& instance, Tour initial, std::vector<double>* trace = nullptr);

// Descent from `initial`, then budget.restarts - 1 descents from randomised
// nearest-neighbour starts; returns the best tour found (never worse than initial).
Tour local_search(const GtspInstance& instance, const Tour& initial, const SearchBudget& budget = {});

}  // namespace gtsp
