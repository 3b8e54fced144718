#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "golden.hpp"
#include "gtsp/baselines.hpp"
#include "gtsp/errors.hpp"
#include "gtsp/ilp.hpp"
#include "gtsp/rng.hpp"
#include "support.hpp"

using namespace gtsp;
using gtsp::testing::brute_force_optimum;
using gtsp::testing::make_instance;

TEST_CASE("exact solver examples") {
  const auto corners = gtsp::testing::unit_corners();
  const Tour t = exact_solve(corners);
  CHECK(t.cost == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(t.nodes == std::vector<int>{0, 1, 2, 3});

  // clusters {(0,0),(0,1)} and {(1,0),(1,1)}, depot (0,0)
  const auto pairs = make_instance({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0, 0, 1, 1});
  const Tour p = exact_solve(pairs);
  CHECK(p.cost == 2.0);
  CHECK(p.nodes == std::vector<int>{0, 2});
}

TEST_CASE("exact solver agrees with an independent enumerator") {
  const auto seeded = generate_instance({10, 4, Family::random, 42, {}});
  CHECK(std::fabs(exact_solve(seeded).cost - brute_force_optimum(seeded)) <= 1e-12);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Family f = std::array{Family::random, Family::proximity, Family::density, Family::hybrid}[seed % 4];
    const auto inst = generate_instance({9, 1 + 2 + static_cast<int>(seed % 3), f, seed, {}});
    const Tour t = exact_solve(inst);
    CHECK(validate_tour(inst, t.nodes).ok());
    CHECK(std::fabs(t.cost - brute_force_optimum(inst)) <= 1e-12);
  }
}

TEST_CASE("exact tie-break picks the lexicographically smallest optimum") {
  // square with singleton clusters: both directions cost 4; 0,1,2,3 < 0,3,2,1
  const auto sq = make_instance({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {0, 1, 2, 3});
  CHECK(exact_solve(sq).nodes == std::vector<int>{0, 1, 2, 3});
  const auto rev = make_instance({{0, 0}, {0, 1}, {1, 1}, {1, 0}}, {0, 1, 2, 3});
  CHECK(exact_solve(rev).nodes == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("exact enumeration budget") {
  const auto inst = generate_instance({40, 8, Family::random, 1, {}});
  std::uint64_t sel = 1;
  const auto members = inst.clusters();
  const int dc = inst.cluster_of[0];
  for (int c = 0; c < 8; ++c) {
    if (c != dc) sel *= members[static_cast<std::size_t>(c)].size();
  }
  CHECK(exact_enumeration_count(inst) == sel * 5040 / 2);
  SearchBudget small;
  small.max_enumerated = 1000;
  const std::string expected = std::to_string(sel * 2520);
  CHECK_THROWS_WITH_AS(exact_solve(inst, small), doctest::Contains(expected.c_str()), BudgetError);
  const auto three = generate_instance({6, 3, Family::random, 1, {}});
  const auto m3 = three.clusters();
  const int d3 = three.cluster_of[0];
  std::uint64_t s3 = 1;
  for (int c = 0; c < 3; ++c) {
    if (c != d3) s3 *= m3[static_cast<std::size_t>(c)].size();
  }
  CHECK(exact_enumeration_count(three) == s3);
}

TEST_CASE("nearest neighbour") {
  const auto corners = gtsp::testing::unit_corners();
  const Tour t = nearest_neighbor_solve(corners);
  CHECK(t.nodes[1] == 1);  // (1,0) and (0,1) tie; lower index wins
  CHECK(t.cost == doctest::Approx(4.0).epsilon(1e-15));
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = generate_instance({12, 4, Family::random, seed, {}});
    const Tour nn = nearest_neighbor_solve(inst);
    CHECK(validate_tour(inst, nn.nodes).ok());
    CHECK(nn.cost >= exact_solve(inst).cost - 1e-12);
  }
}

TEST_CASE("random tours") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto inst = generate_instance({15, 5, Family::hybrid, seed % 7, {}});
    const Tour r = random_tour(inst, seed);
    CHECK(validate_tour(inst, r.nodes).ok());
    CHECK(random_tour(inst, seed).nodes == r.nodes);
  }
  const auto inst = generate_instance({10, 4, Family::random, 3, {}});
  CHECK(random_tour(inst, 1).cost >= exact_solve(inst).cost - 1e-12);
}

TEST_CASE("local search never worsens and descends monotonically") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = generate_instance({30, 8, Family::random, seed, {}});
    const Tour start = random_tour(inst, seed);
    std::vector<double> trace;
    const Tour d = local_descent(inst, start, &trace);
    REQUIRE_FALSE(trace.empty());
    CHECK(trace.front() == doctest::Approx(start.cost));
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
    CHECK(validate_tour(inst, d.nodes).ok());
    SearchBudget b;
    b.restarts = 5;
    b.seed = seed;
    const Tour ls = local_search(inst, start, b);
    CHECK(ls.cost <= start.cost);
    CHECK(ls.cost <= d.cost + 1e-12);
    CHECK(validate_tour(inst, ls.nodes).ok());
  }
  const auto inst = generate_instance({10, 4, Family::random, 5, {}});
  const Tour opt = exact_solve(inst);
  CHECK(local_search(inst, opt).cost == doctest::Approx(opt.cost).epsilon(1e-15));
}

TEST_CASE("ILP model counts") {
  const auto inst = generate_instance({7, 3, Family::random, 8, {}});
  const IlpModel model = build_ilp(inst);
  std::size_t x = 0, y = 0, u = 0;
  for (const auto& v : model.vars) {
    x += v.name[0] == 'x';
    y += v.name[0] == 'y';
    u += v.name[0] == 'u';
  }
  CHECK(x == 7 * 6);
  CHECK(y == 7);
  CHECK(u == 7);
  CHECK(model.count_group("assign") == 3);
  CHECK(model.count_group("inflow") == 7);
  CHECK(model.count_group("outflow") == 7);
  CHECK(model.count_group("ulower") == 7);
  CHECK(model.count_group("uupper") == 7);
  CHECK(model.count_group("mtz") == 6 * 6);
  CHECK(model.count_group("depot") == 1);
  CHECK(model.rows.size() == 3 + 2 * 7 + 2 * 7 + 36 + 1);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      if (i != j) CHECK(model.vars[static_cast<std::size_t>(model.x(i, j))].name == "x_" + std::to_string(i) + "_" + std::to_string(j));
    }
  }
}

TEST_CASE("LP text structure") {
  const auto inst = generate_instance({5, 3, Family::random, 2, {}});
  std::ostringstream out;
  export_ilp(out, inst);
  const std::string lp = out.str();
  CHECK(lp.find("Minimize\n") != std::string::npos);
  CHECK(lp.find("Subject To\n") != std::string::npos);
  CHECK(lp.find("Bounds\n") != std::string::npos);
  CHECK(lp.find("Binaries\n") != std::string::npos);
  CHECK(lp.size() >= 4);
  CHECK(lp.substr(lp.size() - 4) == "End\n");
  CHECK(lp.find(" assign_0: ") != std::string::npos);
  CHECK(lp.find(" mtz_1_2: u_1 - u_2 + 3 x_1_2 + 3 y_2 <= 5\n") != std::string::npos);
  CHECK(lp.find(" depot: y_0 = 1\n") != std::string::npos);
  for (std::size_t pos = 0, next; (next = lp.find('\n', pos)) != std::string::npos; pos = next + 1) {
    CHECK(next - pos < 256);
  }
}

TEST_CASE("LP export is byte-stable (golden)") {
  const auto inst = generate_instance({6, 3, Family::proximity, 11, {}});
  std::ostringstream out;
  export_ilp(out, inst);
  CHECK(gtsp::testing::matches_golden("ilp_proximity_n6_m3.lp", out.str()));
}

TEST_CASE("feasible tours satisfy every row") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = generate_instance({10, 4, Family::random, seed, {}});
    const auto report = check_ilp_constraints(inst, exact_solve(inst).nodes);
    CHECK(report.all_ok());
    CHECK(check_ilp_constraints(inst, random_tour(inst, seed).nodes).all_ok());
  }
}

TEST_CASE("infeasible assignments fail the intended rows") {
  // clusters 0:{0} 1:{1} 2:{2} 3:{3}
  const auto sq = gtsp::testing::unit_corners();
  const auto skip = check_ilp_constraints(sq, std::vector<int>{0, 1, 2});
  CHECK(skip.failures("assign") == 1);

  // Two disjoint subtours 0->1->0 and 2->3->2: degree rows hold, MTZ must fail.
  const IlpModel model = build_ilp(sq);
  std::vector<double> v(model.vars.size(), 0.0);
  for (int i = 0; i < 4; ++i) v[static_cast<std::size_t>(model.y(i))] = 1.0;
  v[static_cast<std::size_t>(model.x(0, 1))] = 1.0;
  v[static_cast<std::size_t>(model.x(1, 0))] = 1.0;
  v[static_cast<std::size_t>(model.x(2, 3))] = 1.0;
  v[static_cast<std::size_t>(model.x(3, 2))] = 1.0;
  for (double u0 : {1.0, 2.0, 3.0, 4.0}) {
    for (double u2 : {1.0, 2.0, 3.0, 4.0}) {
      for (double u3 : {1.0, 2.0, 3.0, 4.0}) {
        v[static_cast<std::size_t>(model.u(0))] = 1.0;
        v[static_cast<std::size_t>(model.u(1))] = u0;
        v[static_cast<std::size_t>(model.u(2))] = u2;
        v[static_cast<std::size_t>(model.u(3))] = u3;
        const auto r = check_assignment(model, v);
        CHECK(r.failures("inflow") == 0);
        CHECK(r.failures("outflow") == 0);
        CHECK(r.failures("assign") == 0);
        CHECK(r.failures("mtz") > 0);
      }
    }
  }

  // A duplicated cluster fails the assignment and degree rows.
  const auto inst = make_instance({{0, 0}, {0.1, 0}, {0.2, 0}, {0.3, 0}}, {0, 1, 1, 2});
  const auto dup = check_ilp_constraints(inst, std::vector<int>{0, 1, 2});
  CHECK(dup.failures("assign") > 0);

  // Fractional values fail the binary domain check.
  std::vector<double> frac(model.vars.size(), 0.5);
  CHECK(check_assignment(model, frac).failures("binary") == model.vars.size() - 4);
}

TEST_CASE("every tour failing validate_tour fails some row") {
  Rng rng(3);
  const auto inst = generate_instance({8, 4, Family::random, 4, {}});
  int infeasible = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> seq(static_cast<std::size_t>(1 + rng.below(5)));
    for (auto& v : seq) v = static_cast<int>(rng.below(8));
    if (validate_tour(inst, seq).ok()) {
      CHECK(check_ilp_constraints(inst, seq).all_ok());
      continue;
    }
    ++infeasible;
    CHECK_FALSE(check_ilp_constraints(inst, seq).all_ok());
  }
  CHECK(infeasible > 1000);
}
