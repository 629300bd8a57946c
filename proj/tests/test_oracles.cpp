// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "dncr/errors.hpp"
#include "dncr/oracles.hpp"

using namespace dncr;

namespace {

RoutingInstance matrix_instance(ProblemKind kind, std::vector<std::vector<double>> dist,
                                int trucks = 1) {
  RoutingInstance inst;
  inst.kind = kind;
  inst.n_nodes = static_cast<int>(dist.size());
  inst.dist = std::move(dist);
  inst.cargo.assign(inst.n_nodes, 0.0);
  inst.capacities.assign(trucks, 1.0);
  return inst;
}

std::vector<std::vector<double>> random_symmetric(int n, uint64_t seed, double lo = 0.1,
                                                  double hi = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m[i][j] = m[j][i] = d(rng);
  return m;
}

std::vector<double> floyd_warshall_from_depot(std::vector<std::vector<double>> d) {
  int n = static_cast<int>(d.size());
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d[0];
}

RoutingInstance random_tsp(int n, uint64_t seed) {
  GenerateParams p;
  p.kind = ProblemKind::TSP;
  p.min_nodes = n;
  p.max_nodes = n;
  p.seed = seed;
  return generate_instance(p);
}

}  // namespace

TEST_CASE("canonical form") {
  Solution fwd{{{0, 1, 3, 2, 0}}};
  Solution rev{{{0, 2, 3, 1, 0}}};
  CHECK(canonicalize(rev) == fwd);
  CHECK(canonicalize(fwd) == fwd);
  CHECK(is_canonical(fwd));
  CHECK(!is_canonical(rev));
  Solution idle{{{0, 0}}};
  CHECK(canonicalize(idle) == idle);
  Solution multi{{{0, 3, 1, 0}, {0, 0}, {0, 2, 4, 0}}};
  Solution canon{{{0, 1, 3, 0}, {0, 0}, {0, 2, 4, 0}}};
  CHECK(canonicalize(multi) == canon);
}

TEST_CASE("dijkstra on a line graph") {
  auto inst = matrix_instance(ProblemKind::SPP, {{0, 1, 4, 9}, {1, 0, 1, 4}, {4, 1, 0, 1}, {9, 4, 1, 0}});
  inst.spp_target = 3;
  auto res = dijkstra_shortest_path(inst);
  CHECK(res.cost == doctest::Approx(3.0));
  CHECK(res.solution.routes == std::vector<std::vector<int>>{{0, 1, 2, 3}});
  CHECK(res.method == OracleMethod::Dijkstra);
}

TEST_CASE("dijkstra handles direct-edge optima and triangle violations") {
  auto inst = matrix_instance(ProblemKind::SPP, {{0, 1, 0.5}, {1, 0, 1}, {0.5, 1, 0}});
  inst.spp_target = 2;
  CHECK(dijkstra_shortest_path(inst).cost == doctest::Approx(0.5));

  // Direct edge 0-2 costs 10 but the detour through 1 costs 2.
  inst = matrix_instance(ProblemKind::SPP, {{0, 1, 10}, {1, 0, 1}, {10, 1, 0}});
  inst.spp_target = 2;
  auto res = dijkstra_shortest_path(inst);
  CHECK(res.cost == doctest::Approx(2.0));
  CHECK(res.solution.routes == std::vector<std::vector<int>>{{0, 1, 2}});
}

TEST_CASE("dijkstra agrees with an all-pairs recomputation") {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    auto dist = random_symmetric(12, seed);
    auto fw = floyd_warshall_from_depot(dist);
    auto inst = matrix_instance(ProblemKind::SPP, dist);
    for (int target = 1; target < 12; ++target) {
      inst.spp_target = target;
      auto res = dijkstra_shortest_path(inst);
      CHECK(res.cost == doctest::Approx(fw[target]).epsilon(1e-12));
      CHECK(res.cost == doctest::Approx(solution_cost(inst, res.solution)).epsilon(1e-12));
      CHECK(validate_solution(inst, res.solution).feasible());
    }
  }
}

TEST_CASE("held-karp on hand instances") {
  auto tri = matrix_instance(ProblemKind::TSP, {{0, 1, 1}, {1, 0, 1}, {1, 1, 0}});
  auto res = held_karp_tsp(tri);
  CHECK(res.cost == doctest::Approx(3.0));
  CHECK(res.solution.routes == std::vector<std::vector<int>>{{0, 1, 2, 0}});

  // Unit square 0-1-2-3: perimeter 4 beats any diagonal crossing.
  double s2 = std::sqrt(2.0);
  auto sq = matrix_instance(ProblemKind::TSP,
                            {{0, 1, s2, 1}, {1, 0, 1, s2}, {s2, 1, 0, 1}, {1, s2, 1, 0}});
  res = held_karp_tsp(sq);
  CHECK(res.cost == doctest::Approx(4.0));
  CHECK(res.solution.routes == std::vector<std::vector<int>>{{0, 1, 2, 3, 0}});

  auto two = matrix_instance(ProblemKind::TSP, {{0, 2.5}, {2.5, 0}});
  res = held_karp_tsp(two);
  CHECK(res.cost == doctest::Approx(5.0));
  CHECK(res.solution.routes == std::vector<std::vector<int>>{{0, 1, 0}});
}

TEST_CASE("held-karp matches brute force") {
  for (uint64_t seed = 0; seed < 40; ++seed) {
    int n = 4 + static_cast<int>(seed % 6);
    auto inst = matrix_instance(ProblemKind::TSP, random_symmetric(n, seed + 100));
    auto hk = held_karp_tsp(inst);
    auto bf = brute_force_tsp(inst);
    CHECK(hk.cost == doctest::Approx(bf.cost).epsilon(1e-12));
    CHECK(is_canonical(hk.solution));
    CHECK(is_canonical(bf.solution));
    CHECK(hk.cost == doctest::Approx(solution_cost(inst, hk.solution)).epsilon(1e-12));
    CHECK(validate_solution(inst, hk.solution).feasible());
  }
}

TEST_CASE("tsp cost is invariant under relabeling the non-depot nodes") {
  auto inst = random_tsp(8, 17);
  std::vector<int> perm{0, 4, 7, 1, 3, 6, 2, 5};
  RoutingInstance relabeled = inst;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) relabeled.dist[perm[i]][perm[j]] = inst.dist[i][j];
  CHECK(held_karp_tsp(relabeled).cost == doctest::Approx(held_karp_tsp(inst).cost).epsilon(1e-12));
}

TEST_CASE("brute force cvrp with one effective truck equals tsp") {
  auto inst = random_tsp(7, 23);
  RoutingInstance vrp = inst;
  vrp.kind = ProblemKind::VRP;
  vrp.cargo.assign(7, 1.0);
  vrp.cargo[0] = 0.0;
  vrp.capacities = {6.0};
  auto res = brute_force_cvrp(vrp);
  CHECK(res.cost == doctest::Approx(held_karp_tsp(inst).cost).epsilon(1e-12));
}

TEST_CASE("capacity forces a split") {
  // Two far-apart pairs; a single truck could serve all four but capacity
  // admits only two nodes per route.
  RoutingInstance inst;
  inst.kind = ProblemKind::CVRP;
  inst.n_nodes = 5;
  inst.dist = {{0, 1, 1, 5, 5}, {1, 0, 1, 5, 5}, {1, 1, 0, 5, 5}, {5, 5, 5, 0, 1}, {5, 5, 5, 1, 0}};
  inst.cargo = {0, 4, 4, 4, 4};
  inst.capacities = {8, 8};
  auto res = brute_force_cvrp(inst);
  CHECK(res.cost == doctest::Approx((1 + 1 + 1) + (5 + 1 + 5)));
  CHECK(validate_solution(inst, res.solution).feasible());
  CHECK(is_canonical(res.solution));
  CHECK(res.solution.routes.size() == 2);
}

TEST_CASE("cvrp optimum is invariant under truck-label permutation") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    GenerateParams p;
    p.kind = ProblemKind::CVRP;
    p.min_nodes = 6;
    p.max_nodes = 8;
    p.n_trucks = 3;
    p.seed = seed + 50;
    auto inst = generate_instance(p);
    auto base = brute_force_cvrp(inst);
    RoutingInstance rotated = inst;
    std::rotate(rotated.capacities.begin(), rotated.capacities.begin() + 1,
                rotated.capacities.end());
    auto rot = brute_force_cvrp(rotated);
    CHECK(rot.cost == doctest::Approx(base.cost).epsilon(1e-12));
    CHECK(validate_solution(inst, base.solution).feasible());
  }
}

TEST_CASE("cvrp exhaustive cross-check on tiny instances") {
  // Independent oracle: try every assignment of nodes to trucks and every
  // order within each truck.
  for (uint64_t seed = 0; seed < 8; ++seed) {
    GenerateParams p;
    p.kind = ProblemKind::CVRP;
    p.min_nodes = 5;
    p.max_nodes = 6;
    p.n_trucks = 2;
    p.seed = seed + 500;
    auto inst = generate_instance(p);
    int n = inst.n_nodes;
    double best = 1e300;
    std::vector<int> assign(n - 1, 0);
    for (int code = 0; code < (1 << (n - 1)); ++code) {
      for (int i = 0; i < n - 1; ++i) assign[i] = (code >> i) & 1;
      double cost = 0.0;
      bool ok = true;
      for (int truck = 0; truck < 2 && ok; ++truck) {
        std::vector<int> nodes;
        double load = 0.0;
        for (int i = 0; i < n - 1; ++i)
          if (assign[i] == truck) {
            nodes.push_back(i + 1);
            load += inst.cargo[i + 1];
          }
        if (load > inst.capacities[truck] + 1e-12) {
          ok = false;
          break;
        }
        if (nodes.empty()) continue;
        std::sort(nodes.begin(), nodes.end());
        double sub_best = 1e300;
        do {
          double c = inst.dist[0][nodes.front()];
          for (size_t i = 0; i + 1 < nodes.size(); ++i) c += inst.dist[nodes[i]][nodes[i + 1]];
          c += inst.dist[nodes.back()][0];
          sub_best = std::min(sub_best, c);
        } while (std::next_permutation(nodes.begin(), nodes.end()));
        cost += sub_best;
      }
      if (ok) best = std::min(best, cost);
    }
    CHECK(brute_force_cvrp(inst).cost == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("solve_exact dispatch and bounds") {
  auto tsp = random_tsp(6, 1);
  CHECK(solve_exact(tsp).method == OracleMethod::HeldKarp);

  GenerateParams p;
  p.kind = ProblemKind::SPP;
  p.min_nodes = 8;
  p.max_nodes = 8;
  p.seed = 2;
  CHECK(solve_exact(generate_instance(p)).method == OracleMethod::Dijkstra);

  p.kind = ProblemKind::CVRP;
  p.n_trucks = 2;
  CHECK(solve_exact(generate_instance(p)).method == OracleMethod::BruteForceCvrp);

  auto big = matrix_instance(ProblemKind::TSP, random_symmetric(kHeldKarpMaxNodes + 1, 9));
  CHECK_THROWS_AS(solve_exact(big), BoundsError);
  CHECK_THROWS_AS(held_karp_tsp(big), BoundsError);
  auto big_bf = matrix_instance(ProblemKind::TSP, random_symmetric(kBruteForceMaxNodes + 1, 9));
  CHECK_THROWS_AS(brute_force_tsp(big_bf), BoundsError);

  RoutingInstance many = generate_instance(p);
  many.capacities.assign(kBruteForceMaxTrucks + 1, many.cargo_sum());
  CHECK_THROWS_AS(brute_force_cvrp(many), BoundsError);
}

TEST_CASE("every oracle reports cost equal to the recomputed solution cost") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    for (auto kind : {ProblemKind::TSP, ProblemKind::VRP, ProblemKind::CVRP}) {
      GenerateParams p;
      p.kind = kind;
      p.min_nodes = 5;
      p.max_nodes = 8;
      p.n_trucks = kind == ProblemKind::TSP ? 1 : 2;
      p.seed = seed + 900;
      auto inst = generate_instance(p);
      auto res = solve_exact(inst);
      CHECK(res.cost == doctest::Approx(solution_cost(inst, res.solution)).epsilon(1e-12));
      CHECK(validate_solution(inst, res.solution).feasible());
      CHECK(is_canonical(res.solution));
    }
  }
}
