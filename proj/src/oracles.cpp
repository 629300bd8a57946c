// SPDX-License-Identifier: Apache-2.0
#include "dncr/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "dncr/errors.hpp"

namespace dncr {

namespace {

bool route_is_empty(const std::vector<int>& route) {
  for (int node : route)
    if (node != 0) return false;
  return true;
}

}  // namespace

Solution canonicalize(const Solution& sol) {
  Solution out = sol;
  for (auto& route : out.routes) {
    if (route_is_empty(route)) {
      route = {0, 0};
      continue;
    }
    // Closed routes only; open SPP paths have a fixed direction already.
    if (route.size() >= 4 && route.front() == 0 && route.back() == 0) {
      if (route[route.size() - 2] < route[1]) std::reverse(route.begin(), route.end());
    }
  }
  return out;
}

bool is_canonical(const Solution& sol) { return canonicalize(sol) == sol; }

OracleResult dijkstra_shortest_path(const RoutingInstance& inst) {
  if (inst.kind != ProblemKind::SPP) throw ConfigError("dijkstra requires an SPP instance");
  const int n = inst.n_nodes;
  const int target = inst.spp_target;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> prev(n, -1);
  dist[0] = 0.0;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  queue.push({0.0, 0});
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    if (u == target) break;
    for (int v = 0; v < n; ++v) {
      if (v == u) continue;
      double nd = d + inst.dist[u][v];
      if (nd < dist[v]) {
        dist[v] = nd;
        prev[v] = u;
        queue.push({nd, v});
      }
    }
  }
  std::vector<int> path;
  for (int v = target; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());

  OracleResult result;
  result.solution.routes.push_back(std::move(path));
  for (int t = 1; t < inst.n_trucks(); ++t) result.solution.routes.push_back({0, 0});
  result.cost = solution_cost(inst, result.solution);
  result.method = OracleMethod::Dijkstra;
  return result;
}

namespace {

// Subset DP over non-depot nodes. C is the cost cell type; backtracking
// re-derives the predecessor chain by replaying the exact min expression,
// so no parent table is kept.
template <typename C>
std::vector<int> held_karp_tour(const RoutingInstance& inst) {
  const int n = inst.n_nodes;
  const int m = n - 1;  // nodes 1..n-1
  auto d = [&](int i, int j) { return static_cast<C>(inst.dist[i][j]); };
  const size_t n_masks = size_t{1} << m;
  std::vector<C> dp(n_masks * m, std::numeric_limits<C>::infinity());
  auto cell = [&](size_t mask, int j) -> C& { return dp[mask * m + j]; };

  for (int j = 0; j < m; ++j) cell(size_t{1} << j, j) = d(0, j + 1);
  for (size_t mask = 1; mask < n_masks; ++mask) {
    for (int j = 0; j < m; ++j) {
      if (!(mask >> j & 1)) continue;
      size_t rest = mask ^ (size_t{1} << j);
      if (rest == 0) continue;
      C best = std::numeric_limits<C>::infinity();
      for (int i = 0; i < m; ++i) {
        if (!(rest >> i & 1)) continue;
        C c = cell(rest, i) + d(i + 1, j + 1);
        if (c < best) best = c;
      }
      cell(mask, j) = best;
    }
  }

  const size_t full = n_masks - 1;
  C best = std::numeric_limits<C>::infinity();
  int last = 0;
  for (int j = 0; j < m; ++j) {
    C c = cell(full, j) + d(j + 1, 0);
    if (c < best) {
      best = c;
      last = j;
    }
  }

  std::vector<int> tour_rev = {0, last + 1};
  size_t mask = full;
  int j = last;
  while (mask != (size_t{1} << j)) {
    size_t rest = mask ^ (size_t{1} << j);
    for (int i = 0; i < m; ++i) {
      if (!(rest >> i & 1)) continue;
      if (cell(rest, i) + d(i + 1, j + 1) == cell(mask, j)) {
        tour_rev.push_back(i + 1);
        mask = rest;
        j = i;
        break;
      }
    }
  }
  tour_rev.push_back(0);
  std::reverse(tour_rev.begin(), tour_rev.end());
  return tour_rev;
}

}  // namespace

OracleResult held_karp_tsp(const RoutingInstance& inst) {
  if (inst.kind != ProblemKind::TSP) throw ConfigError("held_karp requires a TSP instance");
  if (inst.n_nodes > kHeldKarpMaxNodes)
    throw BoundsError("held_karp supports up to " + std::to_string(kHeldKarpMaxNodes) +
                      " nodes; export to TSPLIB and use an external solver instead");
  std::vector<int> tour = inst.n_nodes <= 20 ? held_karp_tour<double>(inst)
                                             : held_karp_tour<float>(inst);
  OracleResult result;
  result.solution.routes.push_back(std::move(tour));
  result.solution = canonicalize(result.solution);
  result.cost = solution_cost(inst, result.solution);
  result.method = OracleMethod::HeldKarp;
  return result;
}

OracleResult brute_force_tsp(const RoutingInstance& inst) {
  if (inst.n_nodes > kBruteForceMaxNodes)
    throw BoundsError("brute_force_tsp supports up to " +
                      std::to_string(kBruteForceMaxNodes) + " nodes");
  const int n = inst.n_nodes;
  std::vector<int> perm(n - 1);
  std::iota(perm.begin(), perm.end(), 1);
  std::vector<int> best_perm = perm;
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = inst.dist[0][perm.front()];
    for (size_t i = 0; i + 1 < perm.size(); ++i) cost += inst.dist[perm[i]][perm[i + 1]];
    cost += inst.dist[perm.back()][0];
    // Lexicographic enumeration + strict improvement keeps the smallest tie.
    if (cost < best) {
      best = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  OracleResult result;
  std::vector<int> route = {0};
  route.insert(route.end(), best_perm.begin(), best_perm.end());
  route.push_back(0);
  result.solution.routes.push_back(std::move(route));
  result.solution = canonicalize(result.solution);
  result.cost = solution_cost(inst, result.solution);
  result.method = OracleMethod::BruteForceTsp;
  return result;
}

namespace {

// Optimal closed subtour through the node subset encoded by mask
// (bit i = node i+1), lowest-index tie-break, as a route 0..0.
std::vector<int> subset_tour(const RoutingInstance& inst, uint32_t mask) {
  std::vector<int> nodes;
  for (int i = 0; i + 1 < inst.n_nodes; ++i)
    if (mask >> i & 1) nodes.push_back(i + 1);
  if (nodes.empty()) return {0, 0};
  std::vector<int> best_perm = nodes;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> perm = nodes;
  do {
    double cost = inst.dist[0][perm.front()];
    for (size_t i = 0; i + 1 < perm.size(); ++i) cost += inst.dist[perm[i]][perm[i + 1]];
    cost += inst.dist[perm.back()][0];
    if (cost < best) {
      best = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<int> route = {0};
  route.insert(route.end(), best_perm.begin(), best_perm.end());
  route.push_back(0);
  return route;
}

double subset_tour_cost(const RoutingInstance& inst, uint32_t mask,
                        std::vector<double>& memo) {
  if (memo[mask] >= 0.0) return memo[mask];
  if (mask == 0) return memo[mask] = 0.0;
  Solution sub;
  sub.routes.push_back(subset_tour(inst, mask));
  return memo[mask] = solution_cost(inst, sub);
}

Solution assignment_to_solution(const RoutingInstance& inst, const std::vector<int>& assign,
                                int n_trucks) {
  Solution sol;
  for (int t = 0; t < n_trucks; ++t) {
    uint32_t mask = 0;
    for (size_t i = 0; i < assign.size(); ++i)
      if (assign[i] == t) mask |= uint32_t{1} << i;
    sol.routes.push_back(subset_tour(inst, mask));
  }
  return canonicalize(sol);
}

bool solution_less(const Solution& a, const Solution& b) {
  return a.routes < b.routes;
}

}  // namespace

OracleResult brute_force_cvrp(const RoutingInstance& inst) {
  if (inst.kind != ProblemKind::VRP && inst.kind != ProblemKind::CVRP)
    throw ConfigError("brute_force_cvrp requires a VRP or CVRP instance");
  if (inst.n_nodes > kBruteForceMaxNodes)
    throw BoundsError("brute_force_cvrp supports up to " +
                      std::to_string(kBruteForceMaxNodes) + " nodes");
  const int n_trucks = inst.n_trucks();
  if (n_trucks > kBruteForceMaxTrucks)
    throw BoundsError("brute_force_cvrp supports up to " +
                      std::to_string(kBruteForceMaxTrucks) + " trucks");

  const int m = inst.n_nodes - 1;
  const bool capacitated = inst.kind == ProblemKind::CVRP;
  std::vector<double> memo(size_t{1} << m, -1.0);
  std::vector<int> assign(m, 0);
  std::vector<int> best_assign;
  double best = std::numeric_limits<double>::infinity();

  for (;;) {
    std::vector<double> load(n_trucks, 0.0);
    std::vector<uint32_t> masks(n_trucks, 0);
    bool feasible = true;
    for (int i = 0; i < m; ++i) {
      load[assign[i]] += inst.cargo[i + 1];
      masks[assign[i]] |= uint32_t{1} << i;
    }
    if (capacitated)
      for (int t = 0; t < n_trucks; ++t)
        if (load[t] > inst.capacities[t]) {
          feasible = false;
          break;
        }
    if (feasible) {
      double cost = 0.0;
      for (int t = 0; t < n_trucks; ++t) cost += subset_tour_cost(inst, masks[t], memo);
      if (cost < best) {
        best = cost;
        best_assign = assign;
      } else if (cost == best && !best_assign.empty()) {
        Solution cand = assignment_to_solution(inst, assign, n_trucks);
        Solution cur = assignment_to_solution(inst, best_assign, n_trucks);
        if (solution_less(cand, cur)) best_assign = assign;
      }
    }
    // Next assignment in base n_trucks, most significant node last.
    int pos = m - 1;
    while (pos >= 0 && assign[pos] == n_trucks - 1) assign[pos--] = 0;
    if (pos < 0) break;
    ++assign[pos];
  }

  if (best_assign.empty()) throw ConfigError("instance is infeasible");

  OracleResult result;
  result.solution = assignment_to_solution(inst, best_assign, n_trucks);
  result.cost = solution_cost(inst, result.solution);
  result.method = OracleMethod::BruteForceCvrp;
  return result;
}

OracleResult solve_exact(const RoutingInstance& inst) {
  switch (inst.kind) {
    case ProblemKind::SPP: return dijkstra_shortest_path(inst);
    case ProblemKind::TSP: return held_karp_tsp(inst);
    case ProblemKind::VRP:
    case ProblemKind::CVRP: return brute_force_cvrp(inst);
  }
  throw ConfigError("unknown problem kind");
}

}  // namespace dncr
