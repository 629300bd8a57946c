// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dncr/instance.hpp"

namespace dncr {

inline constexpr int kTokenWidth = 10;
inline constexpr int kWarmupSteps = 5;  // loss-masked solve steps before scoring

// One time step of model input. Node and truck IDs are stored shifted by +1
// so that 0 is always the reserved empty value, even for the depot.
struct InputToken {
  double v_i = 0, v_j = 0, d = 0;       // edge group
  double v_k = 0, cost_k = 0;           // cargo group (also SPP target node)
  double m_l = 0, cap_l = 0;            // truck group
  double data = 0, task = 0, solve = 0; // stage flags

  std::array<double, kTokenWidth> values() const {
    return {v_i, v_j, d, v_k, cost_k, m_l, cap_l, data, task, solve};
  }
  Eigen::VectorXd vec() const;
};

// Supervised output for one solve step: a (truck, destination) pair as class
// indices. Class 0 is the reserved empty value; trucks are 1..T_max and
// nodes 1..N_max (shifted IDs); the last class of each head marks the end of
// the stream.
struct TargetStep {
  int truck = 0;
  int dest = 0;
  bool operator==(const TargetStep&) const = default;
};

inline int truck_classes(int t_max) { return t_max + 2; }
inline int dest_classes(int n_max) { return n_max + 2; }
inline int truck_end_class(int t_max) { return t_max + 1; }
inline int dest_end_class(int n_max) { return n_max + 1; }

// Number of scored solve steps used at inference time: every truck could
// leave and return to the depot, plus the end step.
inline int inference_output_length(const RoutingInstance& inst) {
  return inst.n_nodes + 2 * inst.n_trucks() + 1;
}

// Closed-form total token count for an episode.
inline int token_count(const RoutingInstance& inst, int l_out) {
  int n = inst.n_nodes;
  return n * (n - 1) / 2 + n + inst.n_trucks() +
         (inst.kind == ProblemKind::SPP ? 1 : 0) + kWarmupSteps + l_out;
}

// Token stream: edges in (i<j) lexicographic order, cargo per node, one task
// token per truck (plus the SPP target token), then kWarmupSteps + l_out
// solve tokens. l_out < 0 selects the inference upper bound.
std::vector<InputToken> encode_instance(const RoutingInstance& inst, int n_max, int t_max,
                                        int l_out = -1);

// Serializes a canonical label truck by truck; ends with the (end, end) step.
std::vector<TargetStep> encode_target(const RoutingInstance& inst, const Solution& label,
                                      int n_max, int t_max);

struct StepLogits {
  Eigen::VectorXd truck;  // truck_classes(t_max)
  Eigen::VectorXd dest;   // dest_classes(n_max)
};

struct DecodeDiagnostics {
  bool end_emitted = false;
  int steps_used = 0;
  std::vector<double> confidence;  // min of the two head softmax maxima per step
};

struct DecodeResult {
  Solution solution;
  DecodeDiagnostics diagnostics;
};

// Greedy argmax per head per scored step. Never throws on malformed
// predictions; infeasible output is left to validate_solution.
DecodeResult decode_output(const std::vector<StepLogits>& logits, const RoutingInstance& inst,
                           int n_max, int t_max);

// Tokens plus per-step optional targets (engaged only on scored solve steps).
struct EncodedEpisode {
  std::vector<InputToken> tokens;
  std::vector<std::optional<TargetStep>> targets;
  int data_tokens = 0;   // edge + cargo token count (the data phase)
  int solve_start = 0;   // index of the first scored solve step
};

EncodedEpisode make_training_episode(const RoutingInstance& inst, const Solution& label,
                                     int n_max, int t_max);
EncodedEpisode make_inference_episode(const RoutingInstance& inst, int n_max, int t_max);

// Rows of 10 numbers, underscores for empty values (debug CLI).
std::string format_token_stream(const std::vector<InputToken>& tokens);

}  // namespace dncr
