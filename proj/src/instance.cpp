// SPDX-License-Identifier: Apache-2.0
#include "dncr/instance.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dncr/errors.hpp"
#include "dncr/rng.hpp"

namespace dncr {

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::SPP: return "SPP";
    case ProblemKind::TSP: return "TSP";
    case ProblemKind::VRP: return "VRP";
    case ProblemKind::CVRP: return "CVRP";
  }
  return "?";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "SPP") return ProblemKind::SPP;
  if (s == "TSP") return ProblemKind::TSP;
  if (s == "VRP") return ProblemKind::VRP;
  if (s == "CVRP") return ProblemKind::CVRP;
  throw ConfigError("unknown problem kind: " + s);
}

double RoutingInstance::cargo_sum() const {
  return std::accumulate(cargo.begin(), cargo.end(), 0.0);
}

void RoutingInstance::check() const {
  if (n_nodes < 2) throw MalformedError("instance needs at least 2 nodes");
  if (static_cast<int>(dist.size()) != n_nodes) throw MalformedError("dist row count mismatch");
  for (int i = 0; i < n_nodes; ++i) {
    if (static_cast<int>(dist[i].size()) != n_nodes)
      throw MalformedError("dist column count mismatch");
    if (dist[i][i] != 0.0) throw MalformedError("dist diagonal not zero");
    for (int j = 0; j < n_nodes; ++j) {
      if (dist[i][j] < 0.0) throw MalformedError("negative distance");
      if (dist[i][j] != dist[j][i]) throw MalformedError("dist not symmetric");
    }
  }
  if (static_cast<int>(cargo.size()) != n_nodes) throw MalformedError("cargo size mismatch");
  if (!cargo.empty() && cargo[0] != 0.0) throw MalformedError("depot cargo must be zero");
  for (double c : cargo)
    if (c < 0.0) throw MalformedError("negative cargo");
  if (capacities.empty()) throw MalformedError("no trucks");
  for (double c : capacities)
    if (c <= 0.0) throw MalformedError("non-positive capacity");
  if (kind == ProblemKind::SPP) {
    if (spp_target < 1 || spp_target >= n_nodes) throw MalformedError("bad SPP target");
  }
  if (kind == ProblemKind::CVRP) {
    double cap_sum = std::accumulate(capacities.begin(), capacities.end(), 0.0);
    if (cap_sum < cargo_sum()) throw MalformedError("capacity sum below cargo sum");
  }
}

namespace {

std::vector<std::pair<double, double>> sample_points(int n, Topography topo,
                                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, double>> pts(n);
  if (topo == Topography::Uniform) {
    for (auto& p : pts) p = {unit(rng), unit(rng)};
  } else {
    int k = std::max(2, n / 8);
    std::vector<std::pair<double, double>> centers(k);
    for (auto& c : centers) c = {unit(rng), unit(rng)};
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::normal_distribution<double> around(0.0, 0.05);
    for (auto& p : pts) {
      auto [cx, cy] = centers[pick(rng)];
      p = {cx + around(rng), cy + around(rng)};
    }
  }
  return pts;
}

// First-fit decreasing feasibility check for homogeneous bins.
bool packable(const std::vector<double>& items, double cap, int bins) {
  std::vector<double> sorted = items;
  std::sort(sorted.rbegin(), sorted.rend());
  std::vector<double> load(bins, 0.0);
  for (double it : sorted) {
    bool placed = false;
    for (double& l : load) {
      if (l + it <= cap) {
        l += it;
        placed = true;
        break;
      }
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

RoutingInstance generate_instance(const GenerateParams& params) {
  if (params.min_nodes < 3) throw ConfigError("min_nodes must be >= 3");
  if (params.max_nodes < params.min_nodes) throw ConfigError("empty node bounds");
  if (params.n_trucks < 1) throw ConfigError("need at least one truck");
  if (params.kind == ProblemKind::CVRP && params.n_trucks < 2)
    throw ConfigError("CVRP needs at least 2 trucks");
  bool single_truck = params.kind == ProblemKind::SPP || params.kind == ProblemKind::TSP;
  if (single_truck && params.n_trucks != 1)
    throw ConfigError("TSP/SPP use exactly one truck");

  auto rng = make_rng(params.seed, "generate");
  std::uniform_int_distribution<int> size_dist(params.min_nodes, params.max_nodes);
  int n = size_dist(rng);

  RoutingInstance inst;
  inst.kind = params.kind;
  inst.n_nodes = n;
  auto pts = sample_points(n, params.topography, rng);
  inst.dist.assign(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dx = pts[i].first - pts[j].first;
      double dy = pts[i].second - pts[j].second;
      double d = std::sqrt(dx * dx + dy * dy);
      inst.dist[i][j] = inst.dist[j][i] = d;
    }

  inst.cargo.assign(n, 0.0);
  bool has_cargo = params.kind == ProblemKind::VRP || params.kind == ProblemKind::CVRP;
  if (has_cargo) {
    std::uniform_int_distribution<int> amount(1, 9);
    for (int i = 1; i < n; ++i) inst.cargo[i] = amount(rng);
  }
  double total = inst.cargo_sum();

  if (params.kind == ProblemKind::CVRP) {
    double cap = std::ceil(1.2 * total / params.n_trucks);
    std::vector<double> items(inst.cargo.begin() + 1, inst.cargo.end());
    while (!packable(items, cap, params.n_trucks)) cap += 1.0;
    inst.capacities.assign(params.n_trucks, cap);
  } else if (params.kind == ProblemKind::VRP) {
    // Uncapacitated: every truck can carry everything.
    inst.capacities.assign(params.n_trucks, std::max(total, 1.0));
  } else {
    inst.capacities.assign(1, std::max(total, 1.0));
  }

  if (params.kind == ProblemKind::SPP) {
    std::uniform_int_distribution<int> target(1, n - 1);
    inst.spp_target = target(rng);
  }

  inst.check();
  return inst;
}

ValidityReport validate_solution(const RoutingInstance& inst, const Solution& sol) {
  if (static_cast<int>(sol.routes.size()) != inst.n_trucks())
    throw MalformedError("route count does not match truck count");
  for (const auto& route : sol.routes)
    for (int node : route)
      if (node < 0 || node >= inst.n_nodes) throw MalformedError("node index out of range");

  ValidityReport report;
  auto add = [&](Violation::Kind k, std::string d) {
    report.violations.push_back({k, std::move(d)});
  };

  std::vector<int> visits(inst.n_nodes, 0);
  if (inst.kind == ProblemKind::SPP) {
    // Single open path 0 -> target; remaining trucks unused.
    const auto& route = sol.routes[0];
    if (route.size() < 2 || route.front() != 0)
      add(Violation::Kind::RouteNotDepotAnchored, "SPP path must start at node 0");
    else if (route.back() != inst.spp_target)
      add(Violation::Kind::WrongEndpoint, "SPP path must end at the target node");
    for (size_t i = 0; i + 1 < route.size(); ++i)
      if (route[i] == route[i + 1])
        add(Violation::Kind::NodeVisitedTwice, "repeated node " + std::to_string(route[i]));
    std::vector<int> seen(inst.n_nodes, 0);
    for (int node : route)
      if (++seen[node] > 1 && node != 0)
        add(Violation::Kind::NodeVisitedTwice, "node " + std::to_string(node));
    return report;
  }

  for (size_t t = 0; t < sol.routes.size(); ++t) {
    const auto& route = sol.routes[t];
    if (route.size() < 2 || route.front() != 0 || route.back() != 0) {
      add(Violation::Kind::RouteNotDepotAnchored, "truck " + std::to_string(t));
      continue;
    }
    double load = 0.0;
    for (size_t i = 1; i + 1 < route.size(); ++i) {
      int node = route[i];
      if (node == 0) {
        add(Violation::Kind::DepotRevisited, "truck " + std::to_string(t));
        continue;
      }
      ++visits[node];
      load += inst.cargo[node];
    }
    if (inst.kind == ProblemKind::CVRP && load > inst.capacities[t])
      add(Violation::Kind::CapacityExceeded,
          "truck " + std::to_string(t) + " load " + std::to_string(load) + " > capacity " +
              std::to_string(inst.capacities[t]));
  }
  for (int node = 1; node < inst.n_nodes; ++node) {
    if (visits[node] == 0)
      add(Violation::Kind::NodeUnvisited, "node " + std::to_string(node));
    else if (visits[node] > 1)
      add(Violation::Kind::NodeVisitedTwice, "node " + std::to_string(node));
  }
  return report;
}

double solution_cost(const RoutingInstance& inst, const Solution& sol) {
  double cost = 0.0;
  for (const auto& route : sol.routes)
    for (size_t i = 0; i + 1 < route.size(); ++i) cost += inst.dist[route[i]][route[i + 1]];
  return cost;
}

void write_instance(std::ostream& os, const RoutingInstance& inst) {
  os.precision(17);
  os << to_string(inst.kind) << ' ' << inst.n_nodes << ' ' << inst.n_trucks() << '\n';
  for (int i = 0; i < inst.n_nodes; ++i) {
    for (int j = 0; j < inst.n_nodes; ++j) os << (j ? " " : "") << inst.dist[i][j];
    os << '\n';
  }
  for (int i = 0; i < inst.n_nodes; ++i) os << (i ? " " : "") << inst.cargo[i];
  os << '\n';
  for (int t = 0; t < inst.n_trucks(); ++t) os << (t ? " " : "") << inst.capacities[t];
  os << '\n';
  if (inst.kind == ProblemKind::SPP) os << "spp_target " << inst.spp_target << '\n';
}

RoutingInstance read_instance(std::istream& is) {
  RoutingInstance inst;
  std::string kind;
  int n_trucks = 0;
  if (!(is >> kind >> inst.n_nodes >> n_trucks)) throw MalformedError("bad instance header");
  inst.kind = problem_kind_from_string(kind);
  if (inst.n_nodes < 2 || inst.n_nodes > 100000) throw MalformedError("bad node count");
  inst.dist.assign(inst.n_nodes, std::vector<double>(inst.n_nodes, 0.0));
  for (auto& row : inst.dist)
    for (double& d : row)
      if (!(is >> d)) throw MalformedError("truncated distance matrix");
  inst.cargo.resize(inst.n_nodes);
  for (double& c : inst.cargo)
    if (!(is >> c)) throw MalformedError("truncated cargo vector");
  inst.capacities.resize(n_trucks);
  for (double& c : inst.capacities)
    if (!(is >> c)) throw MalformedError("truncated capacity vector");
  std::string tag;
  if (is >> tag) {
    if (tag != "spp_target" || !(is >> inst.spp_target))
      throw MalformedError("bad trailing instance data");
  }
  inst.check();
  return inst;
}

void write_solution(std::ostream& os, const Solution& sol) {
  for (const auto& route : sol.routes) {
    for (size_t i = 0; i < route.size(); ++i) os << (i ? " " : "") << route[i];
    os << '\n';
  }
}

Solution read_solution(std::istream& is) {
  Solution sol;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<int> route;
    int node;
    while (ls >> node) route.push_back(node);
    sol.routes.push_back(std::move(route));
  }
  return sol;
}

void write_tsplib(std::ostream& os, const RoutingInstance& inst, const std::string& name) {
  os << "NAME: " << name << '\n';
  os << "TYPE: " << (inst.kind == ProblemKind::TSP ? "TSP" : "CVRP") << '\n';
  os << "DIMENSION: " << inst.n_nodes << '\n';
  os << "EDGE_WEIGHT_TYPE: EXPLICIT\n";
  os << "EDGE_WEIGHT_FORMAT: FULL_MATRIX\n";
  if (inst.kind == ProblemKind::CVRP) os << "CAPACITY: " << inst.capacities[0] << '\n';
  os << "EDGE_WEIGHT_SECTION\n";
  os.precision(17);
  for (const auto& row : inst.dist) {
    for (size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << row[j];
    os << '\n';
  }
  if (inst.kind == ProblemKind::CVRP || inst.kind == ProblemKind::VRP) {
    os << "DEMAND_SECTION\n";
    for (int i = 0; i < inst.n_nodes; ++i) os << i + 1 << ' ' << inst.cargo[i] << '\n';
    os << "DEPOT_SECTION\n1\n-1\n";
  }
  os << "EOF\n";
}

}  // namespace dncr
