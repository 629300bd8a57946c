// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dncr {

enum class ProblemKind { SPP, TSP, VRP, CVRP };

const char* to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& s);

enum class Topography { Uniform, Clustered };

// A routing problem instance: complete weighted graph with depot node 0,
// per-node pickup amounts and a truck fleet.
struct RoutingInstance {
  ProblemKind kind = ProblemKind::TSP;
  int n_nodes = 0;
  std::vector<std::vector<double>> dist;  // n_nodes x n_nodes, symmetric, zero diagonal
  std::vector<double> cargo;              // cargo[0] == 0 (depot)
  std::vector<double> capacities;         // one entry per truck
  int spp_target = -1;                    // SPP only; source is always node 0

  int n_trucks() const { return static_cast<int>(capacities.size()); }
  double cargo_sum() const;

  // Throws MalformedError if any structural invariant is violated.
  void check() const;
};

// Per-truck ordered routes. Routes for TSP/VRP/CVRP start and end at the
// depot; an unused truck has route [0, 0]. SPP solutions are a single open
// path from node 0 to the target.
struct Solution {
  std::vector<std::vector<int>> routes;

  bool operator==(const Solution&) const = default;
};

struct Violation {
  enum class Kind {
    NodeVisitedTwice,
    NodeUnvisited,
    RouteNotDepotAnchored,
    CapacityExceeded,
    DepotRevisited,
    WrongEndpoint,  // SPP path does not end at the target
  };
  Kind kind;
  std::string detail;
};

struct ValidityReport {
  std::vector<Violation> violations;
  bool feasible() const { return violations.empty(); }
};

struct GenerateParams {
  ProblemKind kind = ProblemKind::TSP;
  int min_nodes = 3;
  int max_nodes = 3;
  int n_trucks = 1;
  Topography topography = Topography::Uniform;
  uint64_t seed = 0;
};

// Deterministic per seed. Samples node count uniformly in
// [min_nodes, max_nodes], places points in the unit square (uniform or
// clustered), keeps only the Euclidean distance matrix.
RoutingInstance generate_instance(const GenerateParams& params);

// Throws MalformedError for out-of-range node indices or a wrong route
// count; infeasibility is reported through the returned violation list.
ValidityReport validate_solution(const RoutingInstance& inst, const Solution& sol);

double solution_cost(const RoutingInstance& inst, const Solution& sol);

// Line-oriented instance / solution file formats.
void write_instance(std::ostream& os, const RoutingInstance& inst);
RoutingInstance read_instance(std::istream& is);
void write_solution(std::ostream& os, const Solution& sol);
Solution read_solution(std::istream& is);

// TSPLIB export hook for instances too large for the exact oracles.
void write_tsplib(std::ostream& os, const RoutingInstance& inst, const std::string& name);

}  // namespace dncr
