#include "gtsp/instance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gtsp/errors.hpp"
#include "gtsp/rng.hpp"

namespace gtsp {
namespace {

constexpr std::array kFamilies = {Family::scale,  Family::random,  Family::proximity,
                                  Family::density, Family::hybrid, Family::uniform,
                                  Family::small,  Family::large,   Family::mixed};

// Substream ids inside one instance seed.
constexpr std::uint64_t kCoordStream = 0;
constexpr std::uint64_t kAssignStream = 1;
constexpr std::uint64_t kCentroidStream = 2;
constexpr std::uint64_t kSizeStream = 3;

constexpr int kMaxCentroidAttempts = 100;
constexpr int kMaxSizeAttempts = 100000;

std::vector<Point> uniform_points(Rng& rng, int count, double lo = 0.0, double hi = 1.0) {
  std::vector<Point> pts(static_cast<std::size_t>(count));
  for (auto& p : pts) {
    p.x = rng.uniform(lo, hi);
    p.y = rng.uniform(lo, hi);
  }
  return pts;
}

std::vector<int> shuffled_indices(Rng& rng, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  return perm;
}

int nearest_centroid(const Point& p, std::span<const Point> centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double dx = p.x - centroids[c].x;
    const double dy = p.y - centroids[c].y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

// Assigns `nodes` to `cluster_count` clusters (offset by `first_cluster`) by nearest
// centroid, resampling centroids until every cluster is hit.
void assign_by_proximity(const GeneratorSpec& spec, std::span<const int> nodes, int cluster_count,
                         int first_cluster, GtspInstance& inst, GenerationTrace* trace) {
  for (int attempt = 0; attempt < kMaxCentroidAttempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, {kCentroidStream, static_cast<std::uint64_t>(attempt)}));
    const auto centroids = uniform_points(rng, cluster_count);
    std::vector<int> hits(static_cast<std::size_t>(cluster_count), 0);
    for (int node : nodes) {
      const int c = nearest_centroid(inst.coords[static_cast<std::size_t>(node)], centroids);
      inst.cluster_of[static_cast<std::size_t>(node)] = first_cluster + c;
      ++hits[static_cast<std::size_t>(c)];
    }
    if (std::ranges::all_of(hits, [](int h) { return h > 0; })) {
      if (trace != nullptr) trace->centroids.insert(trace->centroids.end(), centroids.begin(), centroids.end());
      return;
    }
  }
  throw ValidationError("proximity assignment: no centroid draw left every cluster non-empty after " +
                        std::to_string(kMaxCentroidAttempts) + " attempts (n=" + std::to_string(nodes.size()) +
                        ", clusters=" + std::to_string(cluster_count) + ")");
}

// One node per cluster first, the rest uniformly.
void assign_randomly(Rng& rng, std::span<const int> nodes, int cluster_count, int first_cluster,
                     GtspInstance& inst) {
  std::vector<int> order(nodes.begin(), nodes.end());
  rng.shuffle(order.begin(), order.end());
  for (std::size_t p = 0; p < order.size(); ++p) {
    const int c = p < static_cast<std::size_t>(cluster_count)
                      ? static_cast<int>(p)
                      : static_cast<int>(rng.below(static_cast<std::uint64_t>(cluster_count)));
    inst.cluster_of[static_cast<std::size_t>(order[p])] = first_cluster + c;
  }
}

void assign_equal_sizes(Rng& rng, GtspInstance& inst) {
  const auto perm = shuffled_indices(rng, inst.node_count());
  for (std::size_t p = 0; p < perm.size(); ++p) {
    inst.cluster_of[static_cast<std::size_t>(perm[p])] = static_cast<int>(p % static_cast<std::size_t>(inst.cluster_count));
  }
}

std::vector<int> draw_sizes(const GeneratorSpec& spec, const SizeProfile& profile) {
  Rng rng(derive_seed(spec.seed, {kSizeStream}));
  for (int attempt = 0; attempt < kMaxSizeAttempts; ++attempt) {
    const int count = static_cast<int>(rng.between(profile.count_min, profile.count_max));
    std::vector<int> sizes(static_cast<std::size_t>(count));
    int sum = 0;
    for (int c = 0; c + 1 < count; ++c) {
      sizes[static_cast<std::size_t>(c)] = static_cast<int>(rng.between(profile.size_min, profile.size_max));
      sum += sizes[static_cast<std::size_t>(c)];
    }
    const int last = spec.n - sum;
    if (last >= profile.size_min && last <= profile.size_max) {
      sizes.back() = last;
      return sizes;
    }
  }
  throw ValidationError("size profile: could not draw cluster sizes summing to n=" + std::to_string(spec.n));
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::scale: return "scale";
    case Family::random: return "random";
    case Family::proximity: return "proximity";
    case Family::density: return "density";
    case Family::hybrid: return "hybrid";
    case Family::uniform: return "uniform";
    case Family::small: return "small";
    case Family::large: return "large";
    case Family::mixed: return "mixed";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : kFamilies) {
    if (to_string(f) == name) return f;
  }
  throw ValidationError("unknown family '" + std::string(name) + "'");
}

std::span<const Family> all_families() { return kFamilies; }

std::vector<std::vector<int>> GtspInstance::clusters() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(std::max(cluster_count, 0)));
  for (int i = 0; i < node_count(); ++i) {
    const int c = cluster_of[static_cast<std::size_t>(i)];
    if (c >= 0 && c < cluster_count) out[static_cast<std::size_t>(c)].push_back(i);
  }
  return out;
}

void validate_instance(const GtspInstance& inst) {
  const int n = inst.node_count();
  if (n < 2) throw ValidationError("instance: node count must be >= 2, got " + std::to_string(n));
  if (inst.cluster_count < 2) {
    throw ValidationError("instance: cluster count m must be >= 2, got " + std::to_string(inst.cluster_count));
  }
  if (inst.cluster_of.size() != inst.coords.size()) {
    throw ValidationError("instance: cluster list has " + std::to_string(inst.cluster_of.size()) +
                          " entries but there are " + std::to_string(n) + " nodes");
  }
  std::vector<int> sizes(static_cast<std::size_t>(inst.cluster_count), 0);
  for (int i = 0; i < n; ++i) {
    const int c = inst.cluster_of[static_cast<std::size_t>(i)];
    if (c < 0 || c >= inst.cluster_count) {
      throw ValidationError("instance: node " + std::to_string(i) + " has cluster index " + std::to_string(c) +
                            " outside [0, " + std::to_string(inst.cluster_count) + ")");
    }
    ++sizes[static_cast<std::size_t>(c)];
    const Point& p = inst.coords[static_cast<std::size_t>(i)];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      throw ValidationError("instance: node " + std::to_string(i) + " lies outside the unit square");
    }
  }
  for (int c = 0; c < inst.cluster_count; ++c) {
    if (sizes[static_cast<std::size_t>(c)] == 0) {
      throw ValidationError("instance: cluster " + std::to_string(c) + " is empty");
    }
  }
  if (inst.depot < 0 || inst.depot >= n) {
    throw ValidationError("instance: depot " + std::to_string(inst.depot) + " is not a node index");
  }
}

DistanceMatrix::DistanceMatrix(std::span<const Point> coords)
    : n_(coords.size()), entries_(coords.size() * coords.size(), 0.0) {
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) {
      const double d = std::hypot(coords[i].x - coords[j].x, coords[i].y - coords[j].y);
      entries_[i * n_ + j] = d;
      entries_[j * n_ + i] = d;
    }
  }
}

DistanceMatrix distance_matrix(const GtspInstance& instance) { return DistanceMatrix(instance.coords); }

std::string TourReport::summary() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i > 0) out << "; ";
    out << violations[i];
  }
  return out.str();
}

TourReport validate_tour(const GtspInstance& inst, std::span<const int> nodes) {
  TourReport report;
  const int n = inst.node_count();
  const int m = inst.cluster_count;
  if (static_cast<int>(nodes.size()) != m) {
    report.violations.push_back("length: expected " + std::to_string(m) + " nodes, got " +
                                std::to_string(nodes.size()));
  }
  if (!nodes.empty() && nodes.front() != inst.depot) {
    report.violations.push_back("start: tour must start at depot " + std::to_string(inst.depot) + ", starts at " +
                                std::to_string(nodes.front()));
  }
  std::vector<int> seen_in_cluster(static_cast<std::size_t>(std::max(m, 0)), -1);
  std::vector<bool> duplicated(seen_in_cluster.size(), false);
  for (std::size_t p = 0; p < nodes.size(); ++p) {
    const int v = nodes[p];
    if (v < 0 || v >= n) {
      report.violations.push_back("range: position " + std::to_string(p) + " holds node " + std::to_string(v) +
                                  " outside [0, " + std::to_string(n) + ")");
      continue;
    }
    const auto c = static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(v)]);
    if (seen_in_cluster[c] >= 0 && !duplicated[c]) {
      duplicated[c] = true;
      report.violations.push_back("duplicate: cluster " + std::to_string(c) + " visited more than once (nodes " +
                                  std::to_string(seen_in_cluster[c]) + " and " + std::to_string(v) + ")");
    } else if (seen_in_cluster[c] < 0) {
      seen_in_cluster[c] = v;
    }
  }
  for (std::size_t c = 0; c < seen_in_cluster.size(); ++c) {
    if (seen_in_cluster[c] < 0) report.violations.push_back("missing: cluster " + std::to_string(c) + " not visited");
  }
  return report;
}

double cycle_length(const DistanceMatrix& dist, std::span<const int> nodes) {
  if (nodes.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < nodes.size(); ++p) total += dist(nodes[p], nodes[p + 1]);
  return total + dist(nodes.back(), nodes.front());
}

double cycle_length(const GtspInstance& inst, std::span<const int> nodes) {
  if (nodes.size() < 2) return 0.0;
  auto edge = [&](int a, int b) {
    const Point& p = inst.coords[static_cast<std::size_t>(a)];
    const Point& q = inst.coords[static_cast<std::size_t>(b)];
    return std::hypot(p.x - q.x, p.y - q.y);
  };
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < nodes.size(); ++p) total += edge(nodes[p], nodes[p + 1]);
  return total + edge(nodes.back(), nodes.front());
}

double tour_cost(const GtspInstance& inst, std::span<const int> nodes) {
  const auto report = validate_tour(inst, nodes);
  if (!report.ok()) throw FeasibilityError("infeasible tour: " + report.summary());
  return cycle_length(inst, nodes);
}

double tour_cost(const GtspInstance& inst, const Tour& tour) { return tour_cost(inst, tour.nodes); }

Tour make_tour(const GtspInstance& inst, std::vector<int> nodes) {
  const double cost = tour_cost(inst, nodes);
  return Tour{std::move(nodes), cost};
}

SizeProfile default_profile(Family family) {
  switch (family) {
    case Family::small: return {40, 40, 2, 3};
    case Family::large: return {10, 12, 8, 10};
    case Family::mixed: return {15, 20, 1, 15};
    default: return {};
  }
}

bool family_draws_cluster_count(Family family) {
  return family == Family::small || family == Family::large || family == Family::mixed;
}

void validate_spec(const GeneratorSpec& spec) {
  if (spec.n < 2) throw ValidationError("generator: n must be >= 2, got " + std::to_string(spec.n));
  if (family_draws_cluster_count(spec.family)) {
    const SizeProfile p = spec.profile.value_or(default_profile(spec.family));
    if (p.count_min < 2 || p.count_max < p.count_min || p.size_min < 1 || p.size_max < p.size_min) {
      throw ValidationError("generator: size profile for family '" + std::string(to_string(spec.family)) +
                            "' must satisfy 2 <= count_min <= count_max and 1 <= size_min <= size_max");
    }
    if (static_cast<long>(p.count_min) * p.size_min > spec.n ||
        static_cast<long>(p.count_max) * p.size_max < spec.n) {
      throw ValidationError("generator: size profile cannot sum to n=" + std::to_string(spec.n));
    }
    return;
  }
  if (spec.m < 2) throw ValidationError("generator: m must be >= 2, got " + std::to_string(spec.m));
  if (spec.m > spec.n) {
    throw ValidationError("generator: m=" + std::to_string(spec.m) + " exceeds n=" + std::to_string(spec.n));
  }
  if (spec.family == Family::uniform && spec.n % spec.m != 0) {
    throw ValidationError("generator: uniform family requires m to divide n (n=" + std::to_string(spec.n) +
                          ", m=" + std::to_string(spec.m) + ")");
  }
  if (spec.family == Family::hybrid && spec.m < 2) {
    throw ValidationError("generator: hybrid family requires m >= 2");
  }
}

GtspInstance generate_instance(const GeneratorSpec& spec, GenerationTrace* trace) {
  validate_spec(spec);
  GtspInstance inst;
  inst.family = spec.family;
  inst.seed = spec.seed;
  inst.depot = 0;
  inst.cluster_of.assign(static_cast<std::size_t>(spec.n), 0);
  if (trace != nullptr) trace->centroids.clear();

  Rng coord_rng(derive_seed(spec.seed, {kCoordStream}));
  Rng assign_rng(derive_seed(spec.seed, {kAssignStream}));

  switch (spec.family) {
    case Family::scale:
    case Family::uniform: {
      inst.cluster_count = spec.m;
      inst.coords = uniform_points(coord_rng, spec.n);
      assign_equal_sizes(assign_rng, inst);
      break;
    }
    case Family::random: {
      inst.cluster_count = spec.m;
      inst.coords = uniform_points(coord_rng, spec.n);
      std::vector<int> all(static_cast<std::size_t>(spec.n));
      std::iota(all.begin(), all.end(), 0);
      assign_randomly(assign_rng, all, spec.m, 0, inst);
      break;
    }
    case Family::proximity: {
      inst.cluster_count = spec.m;
      inst.coords = uniform_points(coord_rng, spec.n);
      std::vector<int> all(static_cast<std::size_t>(spec.n));
      std::iota(all.begin(), all.end(), 0);
      assign_by_proximity(spec, all, spec.m, 0, inst, trace);
      break;
    }
    case Family::density: {
      constexpr double kSigma = 0.05;
      inst.cluster_count = spec.m;
      const auto centres = uniform_points(coord_rng, spec.m, 0.1, 0.9);
      std::vector<int> all(static_cast<std::size_t>(spec.n));
      std::iota(all.begin(), all.end(), 0);
      assign_randomly(assign_rng, all, spec.m, 0, inst);
      inst.coords.resize(static_cast<std::size_t>(spec.n));
      for (int i = 0; i < spec.n; ++i) {
        const Point& c = centres[static_cast<std::size_t>(inst.cluster_of[static_cast<std::size_t>(i)])];
        const double x = c.x + kSigma * coord_rng.normal();
        const double y = c.y + kSigma * coord_rng.normal();
        inst.coords[static_cast<std::size_t>(i)] = {std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0)};
      }
      if (trace != nullptr) trace->centroids = centres;
      break;
    }
    case Family::hybrid: {
      inst.cluster_count = spec.m;
      inst.coords = uniform_points(coord_rng, spec.n);
      const int near_clusters = (spec.m + 1) / 2;
      const int rand_clusters = spec.m - near_clusters;
      int near_nodes = static_cast<int>(std::lround(static_cast<double>(spec.n) * near_clusters / spec.m));
      near_nodes = std::clamp(near_nodes, near_clusters, spec.n - rand_clusters);
      std::vector<int> near(static_cast<std::size_t>(near_nodes));
      std::iota(near.begin(), near.end(), 0);
      std::vector<int> rest(static_cast<std::size_t>(spec.n - near_nodes));
      std::iota(rest.begin(), rest.end(), near_nodes);
      assign_by_proximity(spec, near, near_clusters, 0, inst, trace);
      assign_randomly(assign_rng, rest, rand_clusters, near_clusters, inst);
      break;
    }
    case Family::small:
    case Family::large:
    case Family::mixed: {
      const auto sizes = draw_sizes(spec, spec.profile.value_or(default_profile(spec.family)));
      inst.cluster_count = static_cast<int>(sizes.size());
      inst.coords = uniform_points(coord_rng, spec.n);
      const auto perm = shuffled_indices(assign_rng, spec.n);
      std::size_t p = 0;
      for (std::size_t c = 0; c < sizes.size(); ++c) {
        for (int s = 0; s < sizes[c]; ++s) inst.cluster_of[static_cast<std::size_t>(perm[p++])] = static_cast<int>(c);
      }
      break;
    }
  }
  validate_instance(inst);
  return inst;
}

std::vector<GtspInstance> generate_dataset(GeneratorSpec spec, int count) {
  std::vector<GtspInstance> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  const std::uint64_t base = spec.seed;
  for (int i = 0; i < count; ++i) {
    spec.seed = base + static_cast<std::uint64_t>(i);
    out.push_back(generate_instance(spec));
  }
  return out;
}

}  // namespace gtsp
