// SPDX-License-Identifier: Apache-2.0
#include "dncr/encoding.hpp"

#include <algorithm>
#include <sstream>

#include "dncr/errors.hpp"
#include "dncr/oracles.hpp"

namespace dncr {

Eigen::VectorXd InputToken::vec() const {
  Eigen::VectorXd v(kTokenWidth);
  auto a = values();
  for (int i = 0; i < kTokenWidth; ++i) v[i] = a[i];
  return v;
}

namespace {

bool route_is_empty(const std::vector<int>& route) {
  return std::all_of(route.begin(), route.end(), [](int n) { return n == 0; });
}

int target_length(const RoutingInstance& inst, const Solution& label) {
  int edges = 0;
  for (const auto& route : label.routes) {
    if (route_is_empty(route)) continue;
    edges += static_cast<int>(route.size()) - 1;
  }
  (void)inst;
  return edges + 1;  // + the (end, end) step
}

}  // namespace

std::vector<InputToken> encode_instance(const RoutingInstance& inst, int n_max, int t_max,
                                        int l_out) {
  if (inst.n_nodes > n_max)
    throw BoundsError("instance has " + std::to_string(inst.n_nodes) +
                      " nodes, encoder limit is " + std::to_string(n_max));
  if (inst.n_trucks() > t_max)
    throw BoundsError("instance has " + std::to_string(inst.n_trucks()) +
                      " trucks, encoder limit is " + std::to_string(t_max));
  if (l_out < 0) l_out = inference_output_length(inst);

  double max_d = 0.0;
  for (const auto& row : inst.dist)
    for (double d : row) max_d = std::max(max_d, d);
  double max_cap = *std::max_element(inst.capacities.begin(), inst.capacities.end());
  auto norm_d = [&](double d) { return max_d > 0.0 ? d / max_d : 0.0; };
  auto norm_c = [&](double c) { return max_cap > 0.0 ? c / max_cap : 0.0; };
  bool zero_cargo = inst.kind == ProblemKind::TSP || inst.kind == ProblemKind::SPP;

  std::vector<InputToken> tokens;
  tokens.reserve(token_count(inst, l_out));
  for (int i = 0; i < inst.n_nodes; ++i) {
    for (int j = i + 1; j < inst.n_nodes; ++j) {
      InputToken t;
      t.v_i = i + 1;
      t.v_j = j + 1;
      t.d = norm_d(inst.dist[i][j]);
      t.data = 1;
      tokens.push_back(t);
    }
  }
  for (int i = 0; i < inst.n_nodes; ++i) {
    InputToken t;
    t.v_k = i + 1;
    t.cost_k = zero_cargo ? 0.0 : norm_c(inst.cargo[i]);
    t.data = 1;
    tokens.push_back(t);
  }
  for (int m = 0; m < inst.n_trucks(); ++m) {
    InputToken t;
    t.m_l = m + 1;
    t.cap_l = norm_c(inst.capacities[m]);
    t.task = 1;
    tokens.push_back(t);
  }
  if (inst.kind == ProblemKind::SPP) {
    InputToken t;
    t.v_k = inst.spp_target + 1;
    t.task = 1;
    tokens.push_back(t);
  }
  for (int s = 0; s < kWarmupSteps + l_out; ++s) {
    InputToken t;
    t.solve = 1;
    tokens.push_back(t);
  }
  return tokens;
}

std::vector<TargetStep> encode_target(const RoutingInstance& inst, const Solution& label,
                                      int n_max, int t_max) {
  if (!is_canonical(label)) throw MalformedError("label is not in canonical form");
  if (static_cast<int>(label.routes.size()) > t_max)
    throw BoundsError("label has more routes than the truck head supports");
  if (inst.n_nodes > n_max)
    throw BoundsError("instance exceeds the destination head size");

  std::vector<TargetStep> steps;
  for (size_t t = 0; t < label.routes.size(); ++t) {
    const auto& route = label.routes[t];
    if (route_is_empty(route)) continue;
    for (size_t i = 1; i < route.size(); ++i)
      steps.push_back({static_cast<int>(t) + 1, route[i] + 1});
  }
  steps.push_back({truck_end_class(t_max), dest_end_class(n_max)});
  return steps;
}

DecodeResult decode_output(const std::vector<StepLogits>& logits, const RoutingInstance& inst,
                           int n_max, int t_max) {
  DecodeResult result;
  const int n_trucks = inst.n_trucks();
  result.solution.routes.assign(n_trucks, {0});

  auto softmax_max = [](const Eigen::VectorXd& v) {
    double m = v.maxCoeff();
    double z = (v.array() - m).exp().sum();
    return 1.0 / z;  // probability of the argmax class
  };

  for (const auto& step : logits) {
    int truck = 0, dest = 0;
    step.truck.maxCoeff(&truck);
    step.dest.maxCoeff(&dest);
    result.diagnostics.confidence.push_back(
        std::min(softmax_max(step.truck), softmax_max(step.dest)));
    if (truck == truck_end_class(t_max) || dest == dest_end_class(n_max)) {
      result.diagnostics.end_emitted = true;
      break;
    }
    ++result.diagnostics.steps_used;
    // Reserved class or a truck/node this instance does not have: skip.
    if (truck < 1 || truck > n_trucks) continue;
    if (dest < 1 || dest > inst.n_nodes) continue;
    result.solution.routes[truck - 1].push_back(dest - 1);
  }
  for (auto& route : result.solution.routes)
    if (route.size() == 1) route.push_back(0);
  return result;
}

EncodedEpisode make_training_episode(const RoutingInstance& inst, const Solution& label,
                                     int n_max, int t_max) {
  EncodedEpisode ep;
  auto targets = encode_target(inst, label, n_max, t_max);
  int l_out = static_cast<int>(targets.size());
  if (l_out != target_length(inst, label))
    throw MalformedError("target stream length mismatch");
  ep.tokens = encode_instance(inst, n_max, t_max, l_out);
  ep.solve_start = static_cast<int>(ep.tokens.size()) - l_out;
  int n = inst.n_nodes;
  ep.data_tokens = n * (n - 1) / 2 + n;
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  for (int i = 0; i < l_out; ++i) ep.targets[ep.solve_start + i] = targets[i];
  return ep;
}

EncodedEpisode make_inference_episode(const RoutingInstance& inst, int n_max, int t_max) {
  EncodedEpisode ep;
  int l_out = inference_output_length(inst);
  ep.tokens = encode_instance(inst, n_max, t_max, l_out);
  ep.solve_start = static_cast<int>(ep.tokens.size()) - l_out;
  int n = inst.n_nodes;
  ep.data_tokens = n * (n - 1) / 2 + n;
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  return ep;
}

std::string format_token_stream(const std::vector<InputToken>& tokens) {
  std::ostringstream os;
  os.precision(3);
  for (const auto& t : tokens) {
    auto vals = t.values();
    for (int i = 0; i < kTokenWidth; ++i) {
      if (i) os << ' ';
      if (vals[i] == 0.0)
        os << '_';
      else
        os << vals[i];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dncr
