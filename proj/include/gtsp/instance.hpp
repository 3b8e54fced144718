#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gtsp {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class Family { scale, random, proximity, density, hybrid, uniform, small, large, mixed };

std::string_view to_string(Family family);
// Throws ValidationError for unknown names.
Family parse_family(std::string_view name);
std::span<const Family> all_families();

// Node-to-cluster partition with one designated depot node.
struct GtspInstance {
  std::vector<Point> coords;
  std::vector<int> cluster_of;
  int cluster_count = 0;
  int depot = 0;
  Family family = Family::random;
  std::uint64_t seed = 0;

  [[nodiscard]] int node_count() const { return static_cast<int>(coords.size()); }
  // Node indices of every cluster, ascending.
  [[nodiscard]] std::vector<std::vector<int>> clusters() const;

  friend bool operator==(const GtspInstance&, const GtspInstance&) = default;
};

// Throws ValidationError naming the first violated invariant.
void validate_instance(const GtspInstance& instance);

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::span<const Point> coords);

  [[nodiscard]] double operator()(int i, int j) const { return entries_[static_cast<std::size_t>(i) * n_ + j]; }
  [[nodiscard]] int size() const { return static_cast<int>(n_); }
  [[nodiscard]] std::span<const double> row(int i) const {
    return {entries_.data() + static_cast<std::size_t>(i) * n_, n_};
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
};

DistanceMatrix distance_matrix(const GtspInstance& instance);

struct Tour {
  std::vector<int> nodes;
  double cost = 0.0;
  friend bool operator==(const Tour&, const Tour&) = default;
};

struct TourReport {
  std::vector<std::string> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string summary() const;
};

TourReport validate_tour(const GtspInstance& instance, std::span<const int> nodes);

// Cyclic length of a node sequence, no feasibility check.
double cycle_length(const GtspInstance& instance, std::span<const int> nodes);
double cycle_length(const DistanceMatrix& dist, std::span<const int> nodes);

// Cyclic tour length. Throws FeasibilityError listing violations for infeasible tours.
double tour_cost(const GtspInstance& instance, std::span<const int> nodes);
double tour_cost(const GtspInstance& instance, const Tour& tour);

// Validates and attaches the cost.
Tour make_tour(const GtspInstance& instance, std::vector<int> nodes);

// Group-size profile used by the small/large/mixed families: the cluster count
// is drawn from [count_min, count_max] and every size from [size_min, size_max].
struct SizeProfile {
  int count_min = 0;
  int count_max = 0;
  int size_min = 0;
  int size_max = 0;
};

struct GeneratorSpec {
  int n = 0;
  // Ignored by families whose cluster count is drawn from a SizeProfile.
  int m = 0;
  Family family = Family::random;
  std::uint64_t seed = 0;
  std::optional<SizeProfile> profile;  // default profile of the family when empty
};

SizeProfile default_profile(Family family);
bool family_draws_cluster_count(Family family);

// Throws ValidationError naming the violated rule.
void validate_spec(const GeneratorSpec& spec);

// Side information recorded while generating, used to check family structure.
struct GenerationTrace {
  std::vector<Point> centroids;  // proximity/hybrid centroids, density blob centres
};

GtspInstance generate_instance(const GeneratorSpec& spec, GenerationTrace* trace = nullptr);

// `count` instances with seeds seed+0 .. seed+count-1.
std::vector<GtspInstance> generate_dataset(GeneratorSpec spec, int count);

}  // namespace gtsp
