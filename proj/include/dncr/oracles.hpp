// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dncr/instance.hpp"

namespace dncr {

enum class OracleMethod { Dijkstra, HeldKarp, BruteForceTsp, BruteForceCvrp };

struct OracleResult {
  Solution solution;  // canonical form, see canonicalize()
  double cost = 0.0;
  OracleMethod method = OracleMethod::BruteForceTsp;
};

// Canonical label form: each closed route is oriented so its second node has
// the lower index; routes stay attached to their truck slot.
Solution canonicalize(const Solution& sol);
bool is_canonical(const Solution& sol);

// SPP. Handles matrices violating the triangle inequality.
OracleResult dijkstra_shortest_path(const RoutingInstance& inst);

inline constexpr int kHeldKarpMaxNodes = 25;
inline constexpr int kBruteForceMaxNodes = 10;
inline constexpr int kBruteForceMaxTrucks = 4;

// Exact TSP via subset dynamic programming. O(2^n n^2) time; the cost table
// takes 8*(n-1)*2^(n-1) bytes for n <= 20 (double cells) and
// 4*(n-1)*2^(n-1) bytes above that (float cells), about 1.6 GB at n = 25.
OracleResult held_karp_tsp(const RoutingInstance& inst);

// Exhaustive permutation search, ties broken lexicographically.
OracleResult brute_force_tsp(const RoutingInstance& inst);

// Exhaustive truck-assignment search with exact per-truck subtours.
// VRP instances are handled as capacity = total cargo.
OracleResult brute_force_cvrp(const RoutingInstance& inst);

// Dispatch on inst.kind, picking the exact method appropriate for its size.
OracleResult solve_exact(const RoutingInstance& inst);

}  // namespace dncr
